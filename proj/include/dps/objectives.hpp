#pragma once

#include <string>
#include <vector>

#include "dps/ops.hpp"
#include "dps/tensor.hpp"

namespace dps {

/// Per-sample loss material for the K+1 training domains. Indices 0..K-1 are
/// the generator-augmented domains; index K is the unmasked source domain.
struct DomainBatch {
    std::vector<Tensor> ce;      // one length-N tensor per domain
    std::vector<Tensor> energy;  // one length-N tensor per domain
};

enum class Regularizer { energy_distance, loss_variance };

namespace detail {

inline std::size_t checked_domain_count(const std::vector<Tensor>& per_domain,
                                        const char* what) {
    if (per_domain.size() < 2)
        throw std::invalid_argument(std::string(what) + ": need the K generator domains plus "
                                                        "the source domain");
    const std::size_t n = per_domain[0].size();
    for (const Tensor& t : per_domain) {
        if (t.size() == 0)
            throw std::invalid_argument(std::string(what) + ": missing domain values");
        if (t.size() != n)
            throw std::invalid_argument(std::string(what) + ": domains disagree on sample count (" +
                                        std::to_string(t.size()) + " vs " + std::to_string(n) +
                                        ")");
    }
    return n;
}

}  // namespace detail

/// Energy score E = -log sum_Y exp(logits[Y]), via stabilized log-sum-exp.
/// Row inputs yield per-row energies.
inline Tensor energy_score(const Tensor& logits) {
    return scalar_mul(log_sum_exp(logits), -1.0);
}

/// KL(Bernoulli(p) || Bernoulli(rho)) summed over generators, samples, and
/// units, divided by N * denom_domains. The graph-level objective divides by
/// N*K; the edge-mask (node task) variant divides by N*(K+1).
inline Tensor kld_loss(const std::vector<std::vector<Tensor>>& probs, double rho,
                       std::size_t denom_domains) {
    if (probs.empty() || probs[0].empty())
        throw std::invalid_argument("kld_loss: no probabilities");
    if (!(rho > 0.0) || !(rho < 1.0))
        throw std::invalid_argument("kld_loss: prior must lie strictly inside (0,1)");
    if (denom_domains == 0) throw std::invalid_argument("kld_loss: zero denominator");
    const std::size_t n_samples = probs[0].size();
    const double log_rho = std::log(rho);
    const double log_1m_rho = std::log(1.0 - rho);

    Tensor total = Tensor::scalar(0.0);
    for (const auto& per_sample : probs) {
        if (per_sample.size() != n_samples)
            throw std::invalid_argument("kld_loss: generators disagree on sample count");
        for (const Tensor& p : per_sample) {
            for (double v : p.data())
                if (!(v > 0.0) || !(v < 1.0))
                    throw std::invalid_argument(
                        "kld_loss: probability " + std::to_string(v) +
                        " escaped the clamp; expected strict (0,1)");
            Tensor om = scalar_add(scalar_mul(p, -1.0), 1.0);
            Tensor kl = add(mul(p, scalar_add(log(p), -log_rho)),
                            mul(om, scalar_add(log(om), -log_1m_rho)));
            total = add(total, sum(kl));
        }
    }
    const double denom =
        static_cast<double>(n_samples) * static_cast<double>(denom_domains);
    return scalar_mul(total, 1.0 / denom);
}

/// Mean cross entropy over all K+1 domains and N samples (Eq. 7 averaging).
inline Tensor ce_loss(const DomainBatch& batch) {
    const std::size_t n = detail::checked_domain_count(batch.ce, "ce_loss");
    Tensor total = Tensor::scalar(0.0);
    for (const Tensor& ce : batch.ce) total = add(total, sum(ce));
    return scalar_mul(total, 1.0 / (static_cast<double>(n) *
                                    static_cast<double>(batch.ce.size())));
}

/// Energy-distance regularizer: per sample, mean squared pairwise energy gap
/// over all unordered pairs of the K+1 domains (source included).
inline Tensor dist_loss(const DomainBatch& batch) {
    const std::size_t n = detail::checked_domain_count(batch.energy, "dist_loss");
    const std::size_t domains = batch.energy.size();  // K + 1
    const std::size_t k = domains - 1;
    Tensor pair_total = Tensor::scalar(0.0);
    for (std::size_t j = 0; j < domains; ++j)
        for (std::size_t l = j + 1; l < domains; ++l)
            pair_total = add(pair_total, sum(square(sub(batch.energy[j], batch.energy[l]))));
    // (1/N) * 2/(K(K+1)) * 1/2 per squared gap
    const double coeff = 1.0 / (static_cast<double>(n) * static_cast<double>(k) *
                                static_cast<double>(domains));
    return scalar_mul(pair_total, coeff);
}

/// Population variance of the per-domain mean CE; the DPS-Rex regularizer.
inline Tensor rex_variance_loss(const DomainBatch& batch) {
    detail::checked_domain_count(batch.ce, "rex_variance_loss");
    std::vector<Tensor> means;
    means.reserve(batch.ce.size());
    for (const Tensor& ce : batch.ce) means.push_back(mean(ce));
    Tensor l = concat(means, 0);
    return sub(mean(square(l)), square(mean(l)));
}

inline Tensor regularizer_loss(const DomainBatch& batch, Regularizer reg) {
    return reg == Regularizer::energy_distance ? dist_loss(batch) : rex_variance_loss(batch);
}

/// Outer objective, minimized over the predictor: CE + alpha * distance.
inline Tensor outer_loss(const DomainBatch& batch, double alpha,
                         Regularizer reg = Regularizer::energy_distance) {
    if (alpha < 0.0) throw std::invalid_argument("outer_loss: alpha must be >= 0");
    Tensor loss = ce_loss(batch);
    if (alpha > 0.0) loss = add(loss, scalar_mul(regularizer_loss(batch, reg), alpha));
    return loss;
}

/// Inner objective, minimized over the generators: CE + beta * KLD - alpha *
/// distance (the generators maximize the distance term of the min-max game).
inline Tensor inner_loss(const DomainBatch& batch,
                         const std::vector<std::vector<Tensor>>& probs, double alpha,
                         double beta, double rho, std::size_t kld_denom_domains,
                         Regularizer reg = Regularizer::energy_distance) {
    if (alpha < 0.0 || beta < 0.0)
        throw std::invalid_argument("inner_loss: weights must be >= 0");
    Tensor loss = ce_loss(batch);
    if (beta > 0.0)
        loss = add(loss, scalar_mul(kld_loss(probs, rho, kld_denom_domains), beta));
    if (alpha > 0.0)
        loss = sub(loss, scalar_mul(regularizer_loss(batch, reg), alpha));
    return loss;
}

}  // namespace dps
