#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

bool gram_at(const Tokens& seq, std::size_t pos, const Tokens& src, std::size_t start, std::size_t k) {
    for (std::size_t t = 0; t < k; ++t) {
        if (seq[pos + t] != src[start + t]) return false;
    }
    return true;
}

std::size_t occurrences(const Tokens& seq, const Tokens& src, std::size_t start, std::size_t k) {
    std::size_t c = 0;
    for (std::size_t p = 0; p + k <= seq.size(); ++p) c += gram_at(seq, p, src, start, k);
    return c;
}

/// Clipped matches: each distinct candidate k-gram counted once at its first position.
double clipped(const Tokens& cand, const Tokens& ref, std::size_t k) {
    double total = 0;
    for (std::size_t i = 0; i + k <= cand.size(); ++i) {
        bool first = true;
        for (std::size_t j = 0; j < i; ++j) {
            if (gram_at(cand, j, cand, i, k)) {
                first = false;
                break;
            }
        }
        if (!first) continue;
        total += static_cast<double>(std::min(occurrences(cand, cand, i, k), occurrences(ref, cand, i, k)));
    }
    return total;
}

double combine(const std::vector<double>& m, const std::vector<double>& t, double c, double r, int n) {
    if (c == 0) return 0.0;
    double product = 1.0;
    for (int k = 0; k < n; ++k) {
        double num = m[k] > 0 ? m[k] : 1e-9;
        double den = t[k] > 0 ? t[k] : 1.0;
        product *= num / den;
    }
    double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::pow(product, 1.0 / n);
}

}  // namespace

double bleu(const Tokens& candidate, const Tokens& reference, int n) {
    return corpus_bleu({candidate}, {reference}, n);
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
    std::vector<double> m(n, 0.0), t(n, 0.0);
    double c = 0, r = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (int k = 1; k <= n; ++k) {
            m[k - 1] += clipped(candidates[i], references[i], k);
            if (candidates[i].size() >= static_cast<std::size_t>(k)) t[k - 1] += candidates[i].size() - k + 1;
        }
        c += candidates[i].size();
        r += references[i].size();
    }
    return combine(m, t, c, r, n);
}

std::size_t lcs(const Tokens& a, const Tokens& b) {
    std::vector<std::vector<std::size_t>> table(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = a.size(); i-- > 0;) {
        for (std::size_t j = b.size(); j-- > 0;) {
            table[i][j] = a[i] == b[j] ? table[i + 1][j + 1] + 1 : std::max(table[i + 1][j], table[i][j + 1]);
        }
    }
    return table[0][0];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
    double l = static_cast<double>(lcs(candidate, reference));
    if (l == 0) return 0.0;
    return 2.0 * l / static_cast<double>(candidate.size() + reference.size());
}

std::vector<dxdialog::ScoredId> rank_diseases(const dxdialog::KnowledgeGraph& graph, const dxdialog::SymptomBase& base) {
    std::vector<dxdialog::ScoredId> out;
    for (const auto& d : graph.disease_ids()) {
        double s = 0.0;
        for (const auto& sym : graph.symptom_ids()) {
            if (base.is_present(sym)) s += graph.correlation(d, sym);
        }
        out.push_back({d, s});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    return out;
}

std::vector<double> numeric_gradient(const dxdialog::fusion::FusionParams& params,
                                     const dxdialog::fusion::FrozenGenerator& gen,
                                     const std::vector<dxdialog::fusion::FusionExample>& batch, double alpha,
                                     dxdialog::fusion::Objective objective, double step) {
    auto flat = params.flatten();
    auto probe = params;
    std::vector<double> g(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double keep = flat[i];
        flat[i] = keep + step;
        probe.assign(flat);
        double up = dxdialog::fusion::batch_loss(probe, gen, batch, alpha, objective);
        flat[i] = keep - step;
        probe.assign(flat);
        double down = dxdialog::fusion::batch_loss(probe, gen, batch, alpha, objective);
        flat[i] = keep;
        g[i] = (up - down) / (2 * step);
    }
    return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace oracle
