#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dxdialog/labels.hpp"

namespace dxdialog::fusion {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr std::size_t kVisualDim = 1024;
inline constexpr std::size_t kTextDim = 384;
inline constexpr double kProbClamp = 1e-12;
inline constexpr double kDefaultAlpha = 1.0;

/// weight is d_in x d_out; output = weight^T e + bias.
struct AlignmentLayer {
    Matrix weight;
    Vector bias;

    Eigen::Index d_in() const { return weight.rows(); }
    Eigen::Index d_out() const { return weight.cols(); }
};

/// weight is d_in x C with C = 14.
struct ClassifierHead {
    Matrix weight;
    Vector bias;
};

/// Trainable parameters: alignment layer followed by the multi-label classifier.
struct FusionParams {
    AlignmentLayer alignment;
    ClassifierHead classifier;

    static FusionParams zeros(Eigen::Index d_in, Eigen::Index d_out);
    static FusionParams random(Eigen::Index d_in, Eigen::Index d_out, std::uint64_t seed, double scale);

    std::size_t size() const;
    /// alignment.weight, alignment.bias, classifier.weight, classifier.bias; column-major.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    void validate() const;
};

/// Frozen stand-in for the language model: token embeddings (V x d_out). Token logits at position i
/// are E (h + mean of E rows over the reference prefix), so the aligned vector h acts as a soft prompt.
struct FrozenGenerator {
    Matrix token_embedding;

    Eigen::Index vocab_size() const { return token_embedding.rows(); }
    static FrozenGenerator random(Eigen::Index vocab, Eigen::Index d_out, std::uint64_t seed, double scale);
};

using TokenSequence = std::vector<int>;

struct FusionExample {
    Vector input;  // fused embedding, d_in
    BoolLabels labels{};
    TokenSequence reference;
};

Vector average_views(std::span<const Vector> views);
/// Same as average_views, but every sentence must be 384-dimensional.
Vector average_sentences(std::span<const Vector> sentences);
/// [mean(views); mean(sentences)]; either side may be empty but not both.
Vector fuse_inputs(std::span<const Vector> views, std::span<const Vector> sentences);

Vector align(const Vector& e, const AlignmentLayer& layer);
/// Elementwise sigmoid of weight^T e + bias, clamped to [kProbClamp, 1 - kProbClamp].
LabelProbabilities classify(const Vector& e, const ClassifierHead& head);

double loss_classification(std::span<const double> probs, std::span<const bool> labels);
/// Teacher-forced negative log-likelihood of `reference` under row-wise softmax of `logits` (L x V).
double loss_report(const Matrix& logits, const TokenSequence& reference);
double total_loss(double l_classification, double l_report, double alpha);

/// L x V logits of the frozen generator for soft prompt h and teacher-forced prefix.
Matrix generator_logits(const FrozenGenerator& gen, const Vector& soft_prompt, const TokenSequence& reference);

struct ForwardResult {
    Vector aligned;
    LabelProbabilities probs{};
    Matrix logits;
    double l_classification = 0.0;
    double l_report = 0.0;
};

ForwardResult forward(const FusionParams& params, const FrozenGenerator& gen, const FusionExample& ex);

/// Which terms the objective contains; used to check each loss's gradient on its own.
enum class Objective { classification, report, total };

/// Summed over the batch.
double batch_loss(const FusionParams& params, const FrozenGenerator& gen,
                  std::span<const FusionExample> batch, double alpha, Objective objective = Objective::total);

struct Gradient {
    FusionParams grad;
    double loss = 0.0;
};

/// Analytic gradient of batch_loss with respect to every trainable entry.
Gradient grad_total_loss(const FusionParams& params, const FrozenGenerator& gen,
                         std::span<const FusionExample> batch, double alpha,
                         Objective objective = Objective::total);

struct ToyTask {
    FrozenGenerator generator;
    std::vector<FusionExample> batch;
};

/// Random linearly separable labels and embedding-dependent reference tokens.
ToyTask make_toy_task(std::uint64_t seed, std::size_t examples = 32, Eigen::Index d_in = 16,
                      Eigen::Index d_out = 8, Eigen::Index vocab = 8, std::size_t length = 4);

/// Plain gradient descent on the batch-mean objective. Returns loss before each step plus the final loss.
std::vector<double> train(FusionParams& params, const FrozenGenerator& gen,
                          std::span<const FusionExample> batch, double alpha, double learning_rate,
                          std::size_t steps);

/// Appends "IDENTIFIED CONDITIONS:" with every label at or above threshold, most probable first.
std::string assemble_report(std::string_view findings_text, const LabelProbabilities& probs,
                            std::span<const std::string_view> labels, double threshold);
std::string assemble_report(std::string_view findings_text, const LabelProbabilities& probs,
                            double threshold = 0.5);

/// Deterministic unit-norm embedding of arbitrary bytes; stands in for the image and sentence encoders.
Vector hash_embedding(std::string_view bytes, std::size_t dim);

nlohmann::json params_to_json(const FusionParams& params);
FusionParams params_from_json(const nlohmann::json& doc);
void save_checkpoint(const FusionParams& params, const std::filesystem::path& path);
FusionParams load_checkpoint(const std::filesystem::path& path);

/// Reads a label vocabulary file (one category per line) and checks it is the CheXpert order.
std::vector<std::string> load_label_vocabulary(const std::filesystem::path& path);

}  // namespace dxdialog::fusion
