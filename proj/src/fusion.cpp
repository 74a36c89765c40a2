#include "dxdialog/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "dxdialog/error.hpp"
#include "dxdialog/text.hpp"

namespace dxdialog::fusion {

namespace {

constexpr Eigen::Index kClasses = static_cast<Eigen::Index>(kLabelCount);

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double ez = std::exp(z);
    return ez / (1.0 + ez);
}

std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void fill_random(Matrix& m, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    }
}

void fill_random(Vector& v, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
}

Vector mean_of(std::span<const Vector> vs, const char* what) {
    if (vs.empty()) throw ShapeError(std::string(what) + ": need at least one vector");
    const auto dim = vs.front().size();
    if (dim == 0) throw ShapeError(std::string(what) + ": zero-dimensional vector");
    Vector sum = Vector::Zero(dim);
    for (const auto& v : vs) {
        if (v.size() != dim) {
            throw ShapeError(std::string(what) + ": dimension mismatch " + std::to_string(v.size()) +
                             " vs " + std::to_string(dim));
        }
        if (!v.allFinite()) throw ShapeError(std::string(what) + ": non-finite entry");
        sum += v;
    }
    return sum / static_cast<double>(vs.size());
}

// Row-wise mean of token embeddings over reference[0..i), one row per position.
Matrix prefix_context(const FrozenGenerator& gen, const TokenSequence& reference) {
    const auto d = gen.token_embedding.cols();
    Matrix ctx = Matrix::Zero(static_cast<Eigen::Index>(reference.size()), d);
    Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(d);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (i > 0) {
            running += gen.token_embedding.row(reference[i - 1]);
            ctx.row(static_cast<Eigen::Index>(i)) = running / static_cast<double>(i);
        }
    }
    return ctx;
}

void check_tokens(const TokenSequence& reference, Eigen::Index vocab) {
    for (int t : reference) {
        if (t < 0 || t >= vocab) {
            throw ShapeError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
        }
    }
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

}  // namespace

FusionParams FusionParams::zeros(Eigen::Index d_in, Eigen::Index d_out) {
    FusionParams p;
    p.alignment.weight = Matrix::Zero(d_in, d_out);
    p.alignment.bias = Vector::Zero(d_out);
    p.classifier.weight = Matrix::Zero(d_out, kClasses);
    p.classifier.bias = Vector::Zero(kClasses);
    return p;
}

FusionParams FusionParams::random(Eigen::Index d_in, Eigen::Index d_out, std::uint64_t seed, double scale) {
    auto p = zeros(d_in, d_out);
    std::mt19937_64 rng(seed);
    fill_random(p.alignment.weight, rng, scale);
    fill_random(p.alignment.bias, rng, scale);
    fill_random(p.classifier.weight, rng, scale);
    fill_random(p.classifier.bias, rng, scale);
    return p;
}

std::size_t FusionParams::size() const {
    return static_cast<std::size_t>(alignment.weight.size() + alignment.bias.size() +
                                    classifier.weight.size() + classifier.bias.size());
}

std::vector<double> FusionParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(size());
    auto push = [&](const auto& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); };
    push(alignment.weight);
    push(alignment.bias);
    push(classifier.weight);
    push(classifier.bias);
    return flat;
}

void FusionParams::assign(std::span<const double> flat) {
    if (flat.size() != size()) throw ShapeError("assign: parameter count mismatch");
    const double* src = flat.data();
    auto pull = [&](auto& m) {
        std::copy(src, src + m.size(), m.data());
        src += m.size();
    };
    pull(alignment.weight);
    pull(alignment.bias);
    pull(classifier.weight);
    pull(classifier.bias);
}

void FusionParams::validate() const {
    if (alignment.bias.size() != alignment.weight.cols()) {
        throw ShapeError("alignment bias " + std::to_string(alignment.bias.size()) + " vs weight " +
                         dims(alignment.weight));
    }
    if (classifier.weight.rows() != alignment.weight.cols()) {
        throw ShapeError("classifier weight " + dims(classifier.weight) + " does not follow alignment " +
                         dims(alignment.weight));
    }
    if (classifier.weight.cols() != kClasses || classifier.bias.size() != kClasses) {
        throw ShapeError("classifier must have 14 outputs");
    }
    if (!alignment.weight.allFinite() || !alignment.bias.allFinite() || !classifier.weight.allFinite() ||
        !classifier.bias.allFinite()) {
        throw ShapeError("non-finite parameter");
    }
}

FrozenGenerator FrozenGenerator::random(Eigen::Index vocab, Eigen::Index d_out, std::uint64_t seed, double scale) {
    FrozenGenerator g;
    g.token_embedding = Matrix::Zero(vocab, d_out);
    std::mt19937_64 rng(seed);
    fill_random(g.token_embedding, rng, scale);
    return g;
}

Vector average_views(std::span<const Vector> views) {
    return mean_of(views, "average_views");
}

Vector average_sentences(std::span<const Vector> sentences) {
    for (const auto& s : sentences) {
        if (s.size() != static_cast<Eigen::Index>(kTextDim)) {
            throw ShapeError("average_sentences: sentence embeddings must be 384-dimensional, got " +
                             std::to_string(s.size()));
        }
    }
    return mean_of(sentences, "average_sentences");
}

Vector fuse_inputs(std::span<const Vector> views, std::span<const Vector> sentences) {
    if (views.empty() && sentences.empty()) throw ShapeError("fuse_inputs: no inputs");
    Vector visual = views.empty() ? Vector::Zero(kVisualDim) : average_views(views);
    Vector text = sentences.empty() ? Vector::Zero(kTextDim) : average_sentences(sentences);
    Vector out(visual.size() + text.size());
    out << visual, text;
    return out;
}

Vector align(const Vector& e, const AlignmentLayer& layer) {
    if (e.size() != layer.weight.rows() || layer.bias.size() != layer.weight.cols()) {
        throw ShapeError("align: input " + std::to_string(e.size()) + " vs layer " + dims(layer.weight));
    }
    return layer.weight.transpose() * e + layer.bias;
}

LabelProbabilities classify(const Vector& e, const ClassifierHead& head) {
    if (e.size() != head.weight.rows() || head.weight.cols() != kClasses || head.bias.size() != kClasses) {
        throw ShapeError("classify: input " + std::to_string(e.size()) + " vs head " + dims(head.weight));
    }
    Vector z = head.weight.transpose() * e + head.bias;
    LabelProbabilities p{};
    for (Eigen::Index j = 0; j < kClasses; ++j) {
        // saturated logits would otherwise round to exactly 0 or 1
        p[static_cast<std::size_t>(j)] = std::clamp(sigmoid(z(j)), kProbClamp, 1.0 - kProbClamp);
    }
    return p;
}

double loss_classification(std::span<const double> probs, std::span<const bool> labels) {
    if (probs.size() != kLabelCount || labels.size() != kLabelCount) {
        throw ShapeError("loss_classification: expected 14 probabilities and 14 labels");
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < kLabelCount; ++j) {
        double p = std::clamp(probs[j], kProbClamp, 1.0 - kProbClamp);
        loss -= labels[j] ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

double loss_report(const Matrix& logits, const TokenSequence& reference) {
    if (logits.rows() != static_cast<Eigen::Index>(reference.size())) {
        throw ShapeError("loss_report: logits have " + std::to_string(logits.rows()) + " rows for a reference of " +
                         std::to_string(reference.size()) + " tokens");
    }
    check_tokens(reference, logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double m = logits.row(i).maxCoeff();
        double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        loss += lse - logits(i, reference[static_cast<std::size_t>(i)]);
    }
    return loss;
}

double total_loss(double l_classification, double l_report, double alpha) {
    return l_classification + alpha * l_report;
}

Matrix generator_logits(const FrozenGenerator& gen, const Vector& soft_prompt, const TokenSequence& reference) {
    if (soft_prompt.size() != gen.token_embedding.cols()) {
        throw ShapeError("generator_logits: soft prompt " + std::to_string(soft_prompt.size()) +
                         " vs embedding " + dims(gen.token_embedding));
    }
    check_tokens(reference, gen.vocab_size());
    Matrix ctx = prefix_context(gen, reference);
    ctx.rowwise() += soft_prompt.transpose();
    return ctx * gen.token_embedding.transpose();
}

ForwardResult forward(const FusionParams& params, const FrozenGenerator& gen, const FusionExample& ex) {
    ForwardResult r;
    r.aligned = align(ex.input, params.alignment);
    r.probs = classify(r.aligned, params.classifier);
    r.logits = generator_logits(gen, r.aligned, ex.reference);
    r.l_classification = loss_classification(r.probs, ex.labels);
    r.l_report = loss_report(r.logits, ex.reference);
    return r;
}

double batch_loss(const FusionParams& params, const FrozenGenerator& gen,
                  std::span<const FusionExample> batch, double alpha, Objective objective) {
    double loss = 0.0;
    for (const auto& ex : batch) {
        auto r = forward(params, gen, ex);
        switch (objective) {
            case Objective::classification: loss += r.l_classification; break;
            case Objective::report: loss += r.l_report; break;
            case Objective::total: loss += total_loss(r.l_classification, r.l_report, alpha); break;
        }
    }
    return loss;
}

Gradient grad_total_loss(const FusionParams& params, const FrozenGenerator& gen,
                         std::span<const FusionExample> batch, double alpha, Objective objective) {
    params.validate();
    const auto d_out = params.alignment.d_out();
    Gradient g{FusionParams::zeros(params.alignment.d_in(), d_out), 0.0};
    const bool with_cls = objective != Objective::report;
    const bool with_rep = objective != Objective::classification;
    const double rep_scale = objective == Objective::total ? alpha : 1.0;

    for (const auto& ex : batch) {
        auto r = forward(params, gen, ex);
        Vector d_aligned = Vector::Zero(d_out);

        if (with_cls) {
            g.loss += r.l_classification;
            Vector dz(kClasses);
            for (Eigen::Index j = 0; j < kClasses; ++j) {
                double p = r.probs[static_cast<std::size_t>(j)];
                bool inside = p > kProbClamp && p < 1.0 - kProbClamp;
                dz(j) = inside ? p - (ex.labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0) : 0.0;
            }
            g.grad.classifier.weight += r.aligned * dz.transpose();
            g.grad.classifier.bias += dz;
            d_aligned += params.classifier.weight * dz;
        }
        if (with_rep) {
            g.loss += rep_scale * r.l_report;
            Matrix dlogits = softmax_rows(r.logits);
            for (std::size_t i = 0; i < ex.reference.size(); ++i) {
                dlogits(static_cast<Eigen::Index>(i), ex.reference[i]) -= 1.0;
            }
            // logits_i = E (h + ctx_i)  =>  dL/dh = sum_i E^T dlogits_i
            Vector dh = gen.token_embedding.transpose() * dlogits.colwise().sum().transpose();
            d_aligned += rep_scale * dh;
        }
        g.grad.alignment.weight += ex.input * d_aligned.transpose();
        g.grad.alignment.bias += d_aligned;
    }
    return g;
}

ToyTask make_toy_task(std::uint64_t seed, std::size_t examples, Eigen::Index d_in, Eigen::Index d_out,
                      Eigen::Index vocab, std::size_t length) {
    std::mt19937_64 rng(seed);
    ToyTask task;
    task.generator = FrozenGenerator::random(vocab, d_out, seed ^ 0x9e3779b97f4a7c15ULL, 1.0);
    Matrix label_planes(d_in, kClasses);
    Matrix token_planes(vocab, d_in);
    fill_random(label_planes, rng, 1.0);
    fill_random(token_planes, rng, 1.0);
    for (std::size_t n = 0; n < examples; ++n) {
        FusionExample ex;
        ex.input = Vector(d_in);
        fill_random(ex.input, rng, 1.0);
        Vector margins = label_planes.transpose() * ex.input;
        for (Eigen::Index j = 0; j < kClasses; ++j) ex.labels[static_cast<std::size_t>(j)] = margins(j) > 0.0;
        Eigen::Index token = 0;
        (token_planes * ex.input).maxCoeff(&token);
        ex.reference.assign(length, static_cast<int>(token));
        task.batch.push_back(std::move(ex));
    }
    return task;
}

std::vector<double> train(FusionParams& params, const FrozenGenerator& gen,
                          std::span<const FusionExample> batch, double alpha, double learning_rate,
                          std::size_t steps) {
    std::vector<double> history;
    history.reserve(steps + 1);
    const double scale = learning_rate / static_cast<double>(std::max<std::size_t>(batch.size(), 1));
    for (std::size_t step = 0; step < steps; ++step) {
        auto g = grad_total_loss(params, gen, batch, alpha);
        history.push_back(g.loss);
        params.alignment.weight -= scale * g.grad.alignment.weight;
        params.alignment.bias -= scale * g.grad.alignment.bias;
        params.classifier.weight -= scale * g.grad.classifier.weight;
        params.classifier.bias -= scale * g.grad.classifier.bias;
    }
    history.push_back(batch_loss(params, gen, batch, alpha));
    return history;
}

std::string assemble_report(std::string_view findings_text, const LabelProbabilities& probs,
                            std::span<const std::string_view> labels, double threshold) {
    if (labels.size() != kLabelCount) throw ShapeError("assemble_report: need 14 label names");
    std::vector<std::size_t> chosen;
    for (std::size_t j = 0; j < kLabelCount; ++j) {
        if (probs[j] >= threshold) chosen.push_back(j);
    }
    std::stable_sort(chosen.begin(), chosen.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::string suffix(kConditionsSentinel);
    if (chosen.empty()) {
        suffix += " none";
    } else {
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            suffix += i ? ", " : " ";
            suffix += labels[chosen[i]];
        }
    }
    std::string body = trim(findings_text);
    if (body.empty()) return suffix;
    return body + "\n\n" + suffix;
}

std::string assemble_report(std::string_view findings_text, const LabelProbabilities& probs, double threshold) {
    return assemble_report(findings_text, probs, std::span<const std::string_view>(kLabelNames), threshold);
}

Vector hash_embedding(std::string_view bytes, std::size_t dim) {
    if (dim == 0) throw ShapeError("hash_embedding: dim must be > 0");
    std::uint64_t state = fnv1a(bytes);
    auto next = [&state] {
        // splitmix64
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0;
    double n = v.norm();
    return n > 0 ? Vector(v / n) : v;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
    auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || static_cast<std::size_t>(shape[0] * shape[1]) != data.size()) {
        throw ShapeError(name + ": shape does not match data length");
    }
    Matrix m(shape[0], shape[1]);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[static_cast<std::size_t>(r * m.cols() + c)];
    }
    return m;
}

}  // namespace

nlohmann::json params_to_json(const FusionParams& params) {
    nlohmann::json doc;
    doc["dims"] = {{"d_in", params.alignment.d_in()},
                   {"d_out", params.alignment.d_out()},
                   {"classes", kClasses}};
    doc["alignment.weight"] = matrix_json(params.alignment.weight);
    doc["alignment.bias"] = matrix_json(params.alignment.bias);
    doc["classifier.weight"] = matrix_json(params.classifier.weight);
    doc["classifier.bias"] = matrix_json(params.classifier.bias);
    return doc;
}

FusionParams params_from_json(const nlohmann::json& doc) {
    FusionParams p;
    try {
        p.alignment.weight = matrix_from_json(doc.at("alignment.weight"), "alignment.weight");
        p.alignment.bias = matrix_from_json(doc.at("alignment.bias"), "alignment.bias");
        p.classifier.weight = matrix_from_json(doc.at("classifier.weight"), "classifier.weight");
        p.classifier.bias = matrix_from_json(doc.at("classifier.bias"), "classifier.bias");
        const auto& d = doc.at("dims");
        if (d.at("d_in").get<Eigen::Index>() != p.alignment.d_in() ||
            d.at("d_out").get<Eigen::Index>() != p.alignment.d_out() ||
            d.at("classes").get<Eigen::Index>() != kClasses) {
            throw ShapeError("checkpoint dims header disagrees with arrays");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
    p.validate();
    return p;
}

void save_checkpoint(const FusionParams& params, const std::filesystem::path& path) {
    write_file_atomic(path, params_to_json(params).dump());
}

FusionParams load_checkpoint(const std::filesystem::path& path) {
    try {
        return params_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("checkpoint " + path.string() + ": " + e.what());
    }
}

std::vector<std::string> load_label_vocabulary(const std::filesystem::path& path) {
    std::vector<std::string> names;
    for (const auto& line : read_lines(path)) {
        auto name = trim(line);
        if (!name.empty() && name.front() != '#') names.push_back(name);
    }
    if (names.size() != kLabelCount) {
        throw ValidationError("label vocabulary must list 14 categories, found " + std::to_string(names.size()));
    }
    for (std::size_t i = 0; i < kLabelCount; ++i) {
        if (label_index(names[i]) != i) {
            throw ValidationError("label vocabulary line " + std::to_string(i + 1) + ": expected '" +
                                  std::string(kLabelNames[i]) + "', got '" + names[i] + "'");
        }
    }
    return names;
}

}  // namespace dxdialog::fusion
