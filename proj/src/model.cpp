#include "fmae/model.hpp"

#include <cmath>
#include <vector>

#include "fmae/signal.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fmae {

namespace {
constexpr uint64_t kInitTag = 0x696e6974;    // parameter init stream
constexpr uint64_t kCheckTag = 0x636865636b; // grad-check data stream
constexpr double kLogvarClip = 30.0;
}  // namespace

void ModelConfig::validate() const {
    if (t_steps < 1 || n_cells < 1 || img_h < 1 || img_w < 1 || img_c < 1 || d_h < 1 ||
        d_img < 1 || n_m < 1)
        throw ParamError("ModelConfig: all extents must be positive");
    if (img_h % 32 != 0 || img_w % 32 != 0)
        throw ParamError("ModelConfig: image extents must be multiples of 32, got " +
                         std::to_string(img_h) + "x" + std::to_string(img_w));
    if (mask_scale_b <= 0.0) throw ParamError("ModelConfig: mask_scale_b must be positive");
}

KlVariant kl_variant_from_string(const std::string& s) {
    if (s == "standard") return KlVariant::Standard;
    if (s == "paper_verbatim") return KlVariant::PaperVerbatim;
    throw ParamError("unknown kl variant: " + s);
}
std::string to_string(KlVariant v) {
    return v == KlVariant::Standard ? "standard" : "paper_verbatim";
}
Ablation ablation_from_string(const std::string& s) {
    if (s == "none") return Ablation::None;
    if (s == "voltage-only" || s == "voltage_only") return Ablation::VoltageOnly;
    if (s == "image-only" || s == "image_only") return Ablation::ImageOnly;
    throw ParamError("unknown ablation: " + s);
}
std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::VoltageOnly: return "voltage_only";
        default: return "image_only";
    }
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

FmaeModel::FmaeModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::substream(init_seed, 0, kInitTag);

    auto weight = [&](const std::string& name, Shape shape, int fan_in) {
        Tensor t = Tensor::zeros(shape);
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-s, s);
        params_.add(name, t);
    };
    auto bias = [&](const std::string& name, int n) { params_.add(name, Tensor::zeros({n})); };
    auto fc_pair = [&](const std::string& prefix, int d_out, int d_in) {
        weight(prefix + ".w", {d_out, d_in}, d_in);
        bias(prefix + ".b", d_out);
    };
    auto lstm = [&](const std::string& prefix, int d_in, int d_h) {
        for (const char* g : {"i", "f", "o", "g"}) {
            weight(prefix + ".w_" + g, {d_h, d_in}, d_in);
            weight(prefix + ".u_" + g, {d_h, d_h}, d_h);
            bias(prefix + ".b_" + g, d_h);
        }
    };
    auto conv = [&](const std::string& prefix, int c_out, int c_in, int k) {
        weight(prefix + ".kernels", {c_out, c_in, k, k}, c_in * k * k);
        bias(prefix + ".bias", c_out);
    };
    auto tconv_p = [&](const std::string& prefix, int c_in, int c_out, int k) {
        weight(prefix + ".kernels", {c_in, c_out, k, k}, c_in * k * k);
        bias(prefix + ".bias", c_out);
    };

    lstm("encoder.seq.lstm", cfg_.n_cells, cfg_.d_h);

    const int enc_ch[5] = {cfg_.img_c, 8, 16, 32, 64};
    for (int i = 1; i <= 4; ++i)
        conv("encoder.img.conv" + std::to_string(i), enc_ch[i], enc_ch[i - 1], 3);
    conv("encoder.img.proj", 64, 64, 1);
    fc_pair("encoder.img.fc1", cfg_.d_h, 64 * cfg_.enc_out_h() * cfg_.enc_out_w());
    fc_pair("encoder.img.fc2", cfg_.d_img, cfg_.d_h);

    fc_pair("merge.fm_fc", cfg_.d_h, cfg_.t_steps * cfg_.n_cells);
    fc_pair("merge.out_fc", cfg_.n_m, cfg_.merge_width());

    fc_pair("reparam.mu_fc", cfg_.n_m, cfg_.n_m);
    fc_pair("reparam.logvar_fc", cfg_.n_m, cfg_.n_m);

    lstm("decoder.seq.lstm", cfg_.n_m, cfg_.d_h);
    fc_pair("decoder.seq.fc", cfg_.n_cells, cfg_.d_h);

    fc_pair("decoder.img.fc1", 2 * cfg_.n_m, cfg_.n_m);
    fc_pair("decoder.img.fc2", 64 * cfg_.dec_in_h() * cfg_.dec_in_w(), 2 * cfg_.n_m);
    conv("decoder.img.proj", 64, 64, 1);
    const int dec_ch[6] = {64, 32, 16, 8, 4, cfg_.img_c};
    for (int i = 1; i <= 5; ++i)
        tconv_p("decoder.img.tconv" + std::to_string(i), dec_ch[i - 1], dec_ch[i], 3);

    fc_pair("detector.fc1", 32, cfg_.n_m);
    fc_pair("detector.fc2", 16, 32);
    fc_pair("detector.fc3", 1, 16);
}

bool FmaeModel::is_detector_param(const std::string& name) {
    return name.rfind("detector.", 0) == 0;
}

LstmParams FmaeModel::lstm_at(const std::string& prefix) const {
    LstmParams p;
    p.w_i = params_.at(prefix + ".w_i").tensor;
    p.u_i = params_.at(prefix + ".u_i").tensor;
    p.b_i = params_.at(prefix + ".b_i").tensor;
    p.w_f = params_.at(prefix + ".w_f").tensor;
    p.u_f = params_.at(prefix + ".u_f").tensor;
    p.b_f = params_.at(prefix + ".b_f").tensor;
    p.w_o = params_.at(prefix + ".w_o").tensor;
    p.u_o = params_.at(prefix + ".u_o").tensor;
    p.b_o = params_.at(prefix + ".b_o").tensor;
    p.w_g = params_.at(prefix + ".w_g").tensor;
    p.u_g = params_.at(prefix + ".u_g").tensor;
    p.b_g = params_.at(prefix + ".b_g").tensor;
    return p;
}

Tensor FmaeModel::fc(const Tensor& x, const std::string& prefix, Tape* tape) const {
    return affine(x, params_.at(prefix + ".w").tensor, params_.at(prefix + ".b").tensor, tape);
}

Tensor FmaeModel::conv_block(const Tensor& x, const std::string& prefix, int stride, int pad,
                             Tape* tape) const {
    Tensor y = conv2d(x, params_.at(prefix + ".kernels").tensor, stride, pad, tape);
    return add_channel_bias(y, params_.at(prefix + ".bias").tensor, tape);
}

Tensor FmaeModel::tconv(const Tensor& x, const std::string& prefix, Tape* tape) const {
    Tensor y = conv_transpose2d(x, params_.at(prefix + ".kernels").tensor, 2, 1, 1, tape);
    return add_channel_bias(y, params_.at(prefix + ".bias").tensor, tape);
}

// ---------------------------------------------------------------------------
// encoder / merge
// ---------------------------------------------------------------------------

Tensor FmaeModel::encode_sequence(const Tensor& voltage, Tape* tape) const {
    if (voltage.ndim() != 2 || voltage.dim(0) != cfg_.t_steps || voltage.dim(1) != cfg_.n_cells)
        throw ShapeError("encode_sequence: expected (" + std::to_string(cfg_.t_steps) + "x" +
                         std::to_string(cfg_.n_cells) + "), got " + shape_str(voltage.shape()));
    const LstmParams p = lstm_at("encoder.seq.lstm");
    Tensor h = Tensor::zeros({cfg_.d_h});
    Tensor c = Tensor::zeros({cfg_.d_h});
    for (int t = 0; t < cfg_.t_steps; ++t) {
        auto [h2, c2] = lstm_step(row(voltage, t, tape), h, c, p, tape);
        h = h2;
        c = c2;
    }
    return h;
}

Tensor FmaeModel::encode_image(const Tensor& image, Tape* tape) const {
    if (image.ndim() != 3 || image.dim(0) != cfg_.img_c || image.dim(1) != cfg_.img_h ||
        image.dim(2) != cfg_.img_w)
        throw ShapeError("encode_image: expected (" + std::to_string(cfg_.img_c) + "x" +
                         std::to_string(cfg_.img_h) + "x" + std::to_string(cfg_.img_w) +
                         "), got " + shape_str(image.shape()));
    Tensor x = image;
    for (int i = 1; i <= 4; ++i)
        x = relu(conv_block(x, "encoder.img.conv" + std::to_string(i), 2, 1, tape), tape);
    x = conv_block(x, "encoder.img.proj", 1, 0, tape);
    x = reshape(x, {64 * cfg_.enc_out_h() * cfg_.enc_out_w()}, tape);
    x = relu(fc(x, "encoder.img.fc1", tape), tape);
    return fc(x, "encoder.img.fc2", tape);
}

namespace {

Tensor merge_concat(const FmaeModel& m, const Tensor& h_seq, const Tensor& fm,
                    const Tensor& h_img, Ablation ablation, Tape* tape);

}  // namespace

Tensor FmaeModel::merge_latent(const Tensor& h_seq, const Tensor& fm, const Tensor& h_img,
                               Tape* tape) const {
    return merge_concat(*this, h_seq, fm, h_img, Ablation::None, tape);
}

namespace {

Tensor merge_concat(const FmaeModel& m, const Tensor& h_seq, const Tensor& fm,
                    const Tensor& h_img, Ablation ablation, Tape* tape) {
    const ModelConfig& cfg = m.config();
    Tensor seq_block, fm_block, img_block;
    if (ablation == Ablation::ImageOnly) {
        seq_block = Tensor::zeros({cfg.d_h});
        fm_block = Tensor::zeros({cfg.d_h});
    } else {
        if (fm.ndim() != 2 || fm.dim(0) != cfg.t_steps || fm.dim(1) != cfg.n_cells)
            throw ShapeError("merge_latent: masked features must be (" +
                             std::to_string(cfg.t_steps) + "x" + std::to_string(cfg.n_cells) +
                             "), got " + shape_str(fm.shape()));
        seq_block = h_seq;
        Tensor fm_flat = reshape(fm, {cfg.t_steps * cfg.n_cells}, tape);
        fm_block = relu(affine(fm_flat, m.params().at("merge.fm_fc.w").tensor,
                               m.params().at("merge.fm_fc.b").tensor, tape),
                        tape);
    }
    img_block = ablation == Ablation::VoltageOnly ? Tensor::zeros({cfg.d_img}) : h_img;
    Tensor cat = concat({seq_block, fm_block, img_block}, tape);
    return affine(cat, m.params().at("merge.out_fc.w").tensor,
                  m.params().at("merge.out_fc.b").tensor, tape);
}

}  // namespace

Tensor FmaeModel::latent_from_sample(const Tensor& voltage, const Tensor& fm, const Tensor& image,
                                     Ablation ablation, Tape* tape) const {
    Tensor h_seq, h_img;
    if (ablation != Ablation::ImageOnly) h_seq = encode_sequence(voltage, tape);
    if (ablation != Ablation::VoltageOnly) h_img = encode_image(image, tape);
    return merge_concat(*this, h_seq, fm, h_img, ablation, tape);
}

// ---------------------------------------------------------------------------
// variational head and decoders
// ---------------------------------------------------------------------------

namespace {

LatentCode make_code(const FmaeModel& m, const Tensor& latent, Tensor epsilon, Tape* tape) {
    LatentCode code;
    code.latent = latent;
    code.mu = affine(latent, m.params().at("reparam.mu_fc.w").tensor,
                     m.params().at("reparam.mu_fc.b").tensor, tape);
    Tensor logvar = affine(latent, m.params().at("reparam.logvar_fc.w").tensor,
                           m.params().at("reparam.logvar_fc.b").tensor, tape);
    // Clipped so sigma stays finite whatever training does to the head.
    logvar = clamp(logvar, -kLogvarClip, kLogvarClip, tape);
    code.sigma = exp_op(scale(logvar, 0.5, tape), tape);
    code.epsilon = std::move(epsilon);
    code.r_m = add(code.mu, mul(code.sigma, code.epsilon, tape), tape);
    return code;
}

}  // namespace

LatentCode FmaeModel::reparameterize(const Tensor& latent, Rng& rng, Tape* tape) const {
    Tensor eps = Tensor::zeros({cfg_.n_m});
    for (int i = 0; i < cfg_.n_m; ++i) eps.data()[i] = rng.normal();
    return make_code(*this, latent, eps, tape);
}

LatentCode FmaeModel::reparameterize_with_eps(const Tensor& latent, const Tensor& epsilon,
                                              Tape* tape) const {
    if (epsilon.ndim() != 1 || epsilon.dim(0) != cfg_.n_m)
        throw ShapeError("reparameterize: epsilon must have length " + std::to_string(cfg_.n_m) +
                         ", got " + shape_str(epsilon.shape()));
    return make_code(*this, latent, epsilon, tape);
}

Tensor FmaeModel::decode_sequence(const Tensor& r_m, Tape* tape) const {
    const LstmParams p = lstm_at("decoder.seq.lstm");
    Tensor h = Tensor::zeros({cfg_.d_h});
    Tensor c = Tensor::zeros({cfg_.d_h});
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(cfg_.t_steps));
    for (int t = 0; t < cfg_.t_steps; ++t) {
        auto [h2, c2] = lstm_step(r_m, h, c, p, tape);
        h = h2;
        c = c2;
        rows.push_back(fc(h, "decoder.seq.fc", tape));
    }
    return stack_rows(rows, tape);
}

Tensor FmaeModel::decode_image(const Tensor& r_m, Tape* tape) const {
    Tensor x = relu(fc(r_m, "decoder.img.fc1", tape), tape);
    x = relu(fc(x, "decoder.img.fc2", tape), tape);
    x = reshape(x, {64, cfg_.dec_in_h(), cfg_.dec_in_w()}, tape);
    x = conv_block(x, "decoder.img.proj", 1, 0, tape);
    for (int i = 1; i <= 4; ++i)
        x = relu(tconv(x, "decoder.img.tconv" + std::to_string(i), tape), tape);
    return sigmoid(tconv(x, "decoder.img.tconv5", tape), tape);
}

Tensor FmaeModel::detect(const Tensor& latent, Tape* tape) const {
    Tensor x = relu(fc(latent, "detector.fc1", tape), tape);
    x = relu(fc(x, "detector.fc2", tape), tape);
    return sigmoid(fc(x, "detector.fc3", tape), tape);
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor FmaeModel::loss_rec_seq(const Tensor& seq_hat, const Tensor& voltage, Tape* tape) {
    if (seq_hat.shape() != voltage.shape())
        throw ShapeError("loss_rec_seq: shapes differ, " + shape_str(seq_hat.shape()) + " vs " +
                         shape_str(voltage.shape()));
    Tensor d = sub(seq_hat, voltage, tape);
    return sum(mul(d, d, tape), tape);
}

Tensor FmaeModel::loss_rec_img(const Tensor& img_hat, const Tensor& image, Tape* tape) {
    if (img_hat.shape() != image.shape())
        throw ShapeError("loss_rec_img: shapes differ, " + shape_str(img_hat.shape()) + " vs " +
                         shape_str(image.shape()));
    Tensor d = sub(img_hat, image, tape);
    return sum(mul(d, d, tape), tape);
}

Tensor FmaeModel::loss_kl(const Tensor& mu, const Tensor& sigma, KlVariant variant, Tape* tape) {
    if (mu.shape() != sigma.shape())
        throw ShapeError("loss_kl: shapes differ, " + shape_str(mu.shape()) + " vs " +
                         shape_str(sigma.shape()));
    for (int64_t i = 0; i < sigma.numel(); ++i)
        if (sigma.data()[i] <= 0.0) throw ParamError("loss_kl: sigma must be strictly positive");
    // 1/2 sum(mu^2 + sigma^2 - c*log(sigma) - 1), c = 2 for the true Gaussian
    // KL (log sigma^2), c = 1 for the verbatim variant.
    const double c = variant == KlVariant::Standard ? 2.0 : 1.0;
    Tensor terms = add(mul(mu, mu, tape), mul(sigma, sigma, tape), tape);
    terms = sub(terms, scale(log_op(sigma, tape), c, tape), tape);
    terms = add_scalar(terms, -1.0, tape);
    return scale(sum(terms, tape), 0.5, tape);
}

Tensor FmaeModel::loss_detector(const Tensor& p, double label, Tape* tape) {
    if (p.numel() != 1)
        throw ShapeError("loss_detector: probability must be scalar, got " + shape_str(p.shape()));
    Tensor pc = clamp(p, 1e-12, 1.0 - 1e-12, tape);
    Tensor t1 = scale(log_op(pc, tape), -label, tape);
    Tensor t2 = scale(log_op(rsub_scalar(1.0, pc, tape), tape), -(1.0 - label), tape);
    return add(t1, t2, tape);
}

// ---------------------------------------------------------------------------
// full training pass
// ---------------------------------------------------------------------------

namespace {

FmaeModel::ForwardResult run_forward(const FmaeModel& m, const Tensor& voltage, const Tensor& fm,
                                     const Tensor& image, LatentCode code, double alpha,
                                     double beta, double gamma, KlVariant variant, Tape& tape) {
    FmaeModel::ForwardResult r;
    r.code = std::move(code);
    r.recon.seq_hat = m.decode_sequence(r.code.r_m, &tape);
    r.recon.img_hat = m.decode_image(r.code.r_m, &tape);

    Tensor l_seq = FmaeModel::loss_rec_seq(r.recon.seq_hat, voltage, &tape);
    Tensor l_img = FmaeModel::loss_rec_img(r.recon.img_hat, image, &tape);
    Tensor l_kl = FmaeModel::loss_kl(r.code.mu, r.code.sigma, variant, &tape);

    Tensor total = add(scale(l_seq, alpha, &tape), scale(l_img, beta, &tape), &tape);
    if (gamma != 0.0) total = add(total, scale(l_kl, gamma, &tape), &tape);

    r.losses.rec_seq = l_seq.item();
    r.losses.rec_img = l_img.item();
    r.losses.kl = l_kl.item();
    r.losses.total = total.item();
    r.losses.alpha = alpha;
    r.losses.beta = beta;
    r.losses.gamma = gamma;
    r.total = total;
    return r;
}

}  // namespace

FmaeModel::ForwardResult FmaeModel::forward_train(const Tensor& voltage, const Tensor& fm,
                                                  const Tensor& image, Rng& rng, double alpha,
                                                  double beta, double gamma, KlVariant variant,
                                                  Tape& tape) const {
    Tensor latent = latent_from_sample(voltage, fm, image, Ablation::None, &tape);
    return run_forward(*this, voltage, fm, image, reparameterize(latent, rng, &tape), alpha, beta,
                       gamma, variant, tape);
}

FmaeModel::ForwardResult FmaeModel::forward_train_with_eps(const Tensor& voltage, const Tensor& fm,
                                                           const Tensor& image,
                                                           const Tensor& epsilon, double alpha,
                                                           double beta, double gamma,
                                                           KlVariant variant, Tape& tape) const {
    Tensor latent = latent_from_sample(voltage, fm, image, Ablation::None, &tape);
    return run_forward(*this, voltage, fm, image, reparameterize_with_eps(latent, epsilon, &tape),
                       alpha, beta, gamma, variant, tape);
}

// ---------------------------------------------------------------------------
// whole-model gradient check
// ---------------------------------------------------------------------------

double full_model_grad_check(const ModelConfig& cfg, uint64_t seed, double step) {
    FmaeModel master(cfg, seed);
    Rng data_rng = Rng::substream(seed, 0, kCheckTag);

    Tensor voltage = Tensor::zeros({cfg.t_steps, cfg.n_cells});
    for (int64_t i = 0; i < voltage.numel(); ++i) voltage.data()[i] = data_rng.uniform(3.0, 3.4);
    Tensor image = Tensor::zeros({cfg.img_c, cfg.img_h, cfg.img_w});
    for (int64_t i = 0; i < image.numel(); ++i) image.data()[i] = data_rng.uniform(0.05, 0.95);
    Tensor fm = signal::frequency_masked_features(voltage, cfg.mask_scale_b);
    Tensor eps = Tensor::zeros({cfg.n_m});
    for (int i = 0; i < cfg.n_m; ++i) eps.data()[i] = data_rng.normal();

    const double alpha = 1.0, beta = 1.0, gamma = 0.1;
    const KlVariant variant = KlVariant::Standard;

    Tape tape;
    auto result =
        master.forward_train_with_eps(voltage, fm, image, eps, alpha, beta, gamma, variant, tape);
    backward(result.total, tape);
    tape.clear();

    // Flatten the autoencoder parameters into one element index space.
    struct Entry {
        size_t param;
        int64_t base;
    };
    std::vector<Entry> entries;
    int64_t total_elems = 0;
    for (size_t i = 0; i < master.params().size(); ++i) {
        if (FmaeModel::is_detector_param(master.params()[i].name)) continue;
        entries.push_back({i, total_elems});
        total_elems += master.params()[i].tensor.numel();
    }
    auto locate = [&](int64_t e) {
        size_t lo = 0, hi = entries.size() - 1;
        while (lo < hi) {
            size_t mid = (lo + hi + 1) / 2;
            if (entries[mid].base <= e) lo = mid; else hi = mid - 1;
        }
        return std::pair<size_t, int64_t>(entries[lo].param, e - entries[lo].base);
    };

    double max_err = 0.0;
#pragma omp parallel reduction(max : max_err)
    {
        FmaeModel replica(cfg, seed);
        replica.params().copy_data_from(master.params());
        // Difference evaluations are pure forwards; keep them off the tape.
        for (size_t i = 0; i < replica.params().size(); ++i)
            replica.params()[i].tensor.node()->requires_grad = false;
#pragma omp for schedule(dynamic, 256)
        for (int64_t e = 0; e < total_elems; ++e) {
            auto [pi, off] = locate(e);
            double* slot = replica.params()[pi].tensor.data() + off;
            const double saved = *slot;
            Tape no_tape;

            *slot = saved + step;
            no_tape.clear();
            const double f_plus = replica
                                      .forward_train_with_eps(voltage, fm, image, eps, alpha, beta,
                                                              gamma, variant, no_tape)
                                      .losses.total;
            *slot = saved - step;
            no_tape.clear();
            const double f_minus = replica
                                       .forward_train_with_eps(voltage, fm, image, eps, alpha,
                                                               beta, gamma, variant, no_tape)
                                       .losses.total;
            *slot = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const Tensor& t = master.params()[pi].tensor;
            const double analytic = t.has_grad() ? t.grad_vec()[static_cast<size_t>(off)] : 0.0;
            const double err =
                std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            if (err > max_err) max_err = err;
        }
    }
    return max_err;
}

}  // namespace fmae
