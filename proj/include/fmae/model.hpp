#pragma once

#include <cstdint>
#include <string>

#include "fmae/rng.hpp"
#include "fmae/tensor.hpp"

namespace fmae {

// Architecture extents. Defaults match the production model: 60x16 voltage
// windows, 64x64 single-channel thermal images, 64-wide latent.
struct ModelConfig {
    int t_steps = 60;   // time steps per voltage window
    int n_cells = 16;   // electrolytic cells == matrix columns
    int img_h = 64;
    int img_w = 64;
    int img_c = 1;
    int d_h = 64;       // LSTM hidden width == sequence code size
    int d_img = 16;     // image code size
    int n_m = 64;       // latent dimension
    double mask_scale_b = 7.5;  // frequency-mask decay length in bins

    int n_pixels() const { return img_h * img_w * img_c; }
    int merge_width() const { return d_h + d_h + d_img; }
    // Spatial size after the four stride-2 encoder blocks / before the five
    // stride-2 decoder upsamplings.
    int enc_out_h() const { return img_h / 16; }
    int enc_out_w() const { return img_w / 16; }
    int dec_in_h() const { return img_h / 32; }
    int dec_in_w() const { return img_w / 32; }

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class KlVariant { Standard, PaperVerbatim };
enum class Ablation { None, VoltageOnly, ImageOnly };

KlVariant kl_variant_from_string(const std::string& s);
std::string to_string(KlVariant v);
Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

// Latent head outputs: r_m = mu + sigma * epsilon holds exactly.
struct LatentCode {
    Tensor latent;   // deterministic merge output, fed to the detector
    Tensor mu;
    Tensor sigma;    // strictly positive
    Tensor epsilon;  // the sampled noise
    Tensor r_m;      // resampled code, fed to the decoders
};

struct Reconstruction {
    Tensor seq_hat;  // t_steps x n_cells
    Tensor img_hat;  // img_c x img_h x img_w, values in [0,1]
};

struct LossBreakdown {
    double rec_seq = 0.0;
    double rec_img = 0.0;
    double kl = 0.0;
    double total = 0.0;
    double alpha = 1.0, beta = 1.0, gamma = 0.1;
};

// The frequency-masked multimodal autoencoder: LSTM sequence encoder, CNN
// image encoder, merge module over [hidden seq | masked spectrum | hidden
// image], variational resampling, twin decoders and a cascaded detector.
class FmaeModel {
  public:
    FmaeModel(const ModelConfig& cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    static bool is_detector_param(const std::string& name);

    // Final hidden state of the LSTM run over the t_steps rows.
    Tensor encode_sequence(const Tensor& voltage, Tape* tape = nullptr) const;
    // Four stride-2 conv blocks, 1x1 channel mixer, two FC layers -> d_img.
    Tensor encode_image(const Tensor& image, Tape* tape = nullptr) const;
    // FC over the flattened masked spectrum, concat, FC -> latent.
    Tensor merge_latent(const Tensor& h_seq, const Tensor& fm, const Tensor& h_img,
                        Tape* tape = nullptr) const;
    // encode_* + merge with the requested modality zeroed at the concat.
    // `fm` is the precomputed masked spectrum of `voltage`.
    Tensor latent_from_sample(const Tensor& voltage, const Tensor& fm, const Tensor& image,
                              Ablation ablation, Tape* tape = nullptr) const;

    LatentCode reparameterize(const Tensor& latent, Rng& rng, Tape* tape = nullptr) const;
    // Same with caller-fixed noise (gradient checking, tests).
    LatentCode reparameterize_with_eps(const Tensor& latent, const Tensor& epsilon,
                                       Tape* tape = nullptr) const;

    // r_m fed as the input of every LSTM step, shared FC per step -> row.
    Tensor decode_sequence(const Tensor& r_m, Tape* tape = nullptr) const;
    // Two FC expansions, 1x1 mixer, five stride-2 transposed convs, sigmoid.
    Tensor decode_image(const Tensor& r_m, Tape* tape = nullptr) const;
    // Three-FC cascade on the deterministic latent; scalar probability.
    Tensor detect(const Tensor& latent, Tape* tape = nullptr) const;

    static Tensor loss_rec_seq(const Tensor& seq_hat, const Tensor& voltage, Tape* tape = nullptr);
    static Tensor loss_rec_img(const Tensor& img_hat, const Tensor& image, Tape* tape = nullptr);
    static Tensor loss_kl(const Tensor& mu, const Tensor& sigma, KlVariant variant,
                          Tape* tape = nullptr);
    // Binary cross-entropy with probability clamped to [1e-12, 1-1e-12].
    static Tensor loss_detector(const Tensor& p, double label, Tape* tape = nullptr);

    struct ForwardResult {
        LossBreakdown losses;
        Tensor total;  // recorded on the tape
        LatentCode code;
        Reconstruction recon;
    };
    // Full training pass over one sample; everything on one tape. When
    // gamma == 0 the KL term is reported but kept out of the total.
    ForwardResult forward_train(const Tensor& voltage, const Tensor& fm, const Tensor& image,
                                Rng& rng, double alpha, double beta, double gamma,
                                KlVariant variant, Tape& tape) const;
    ForwardResult forward_train_with_eps(const Tensor& voltage, const Tensor& fm,
                                         const Tensor& image, const Tensor& epsilon, double alpha,
                                         double beta, double gamma, KlVariant variant,
                                         Tape& tape) const;

  private:
    ModelConfig cfg_;
    ParameterStore params_;

    LstmParams lstm_at(const std::string& prefix) const;
    Tensor fc(const Tensor& x, const std::string& prefix, Tape* tape) const;
    Tensor conv_block(const Tensor& x, const std::string& prefix, int stride, int pad,
                      Tape* tape) const;
    Tensor tconv(const Tensor& x, const std::string& prefix, Tape* tape) const;
};

// Max relative error between reverse-mode and central-difference gradients of
// the total loss, taken over every autoencoder parameter element (the
// detector does not feed the reconstruction objective). Finite differences
// parallelize over parameter elements with one model replica per thread.
double full_model_grad_check(const ModelConfig& cfg, uint64_t seed, double step);

}  // namespace fmae
