#pragma once

#include <optional>
#include <string>
#include <vector>

#include "licda/ops.hpp"
#include "licda/tensor.hpp"

namespace licda {

enum class PolicyKind { kProposed, kTop1, kOracle };

inline std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::kProposed: return "proposed";
        case PolicyKind::kTop1: return "top1";
        case PolicyKind::kOracle: return "oracle";
    }
    return "?";
}

inline PolicyKind policy_from_string(const std::string& s) {
    if (s == "proposed") return PolicyKind::kProposed;
    if (s == "top1") return PolicyKind::kTop1;
    if (s == "oracle") return PolicyKind::kOracle;
    throw ConfigError("unknown blend policy '" + s + "' (expected proposed|top1|oracle)");
}

// Single-distribution form. Ties in top1 break toward the lowest index;
// argmax_index uses strict > so the first maximum wins.
template <class S>
std::vector<S> apply_policy_vec(const std::vector<S>& v, std::optional<int> label, PolicyKind kind) {
    const int n = static_cast<int>(v.size());
    switch (kind) {
        case PolicyKind::kProposed: return v;
        case PolicyKind::kTop1: {
            std::vector<S> out(v.size(), S(0));
            out[static_cast<std::size_t>(argmax_index(v))] = S(1);
            return out;
        }
        case PolicyKind::kOracle: {
            if (!label) throw ContractError("oracle policy requires a domain label");
            if (*label < 0 || *label >= n) throw ContractError("oracle label out of range");
            std::vector<S> out(v.size(), S(0));
            out[static_cast<std::size_t>(*label)] = S(1);
            return out;
        }
    }
    throw ContractError("bad policy kind");
}

// Batched form over v: [N, K+1]. proposed returns v itself (gradients keep
// flowing through the gate); top1 and oracle emit constant one-hot rows, so
// the selection is not differentiated through.
template <class S>
Tensor<S> apply_policy(const Tensor<S>& v, const std::vector<int>* labels, PolicyKind kind) {
    if (v.rank() != 2) throw ContractError("apply_policy: v must be [N, K+1]");
    const int N = v.dim(0), C = v.dim(1);
    if (kind == PolicyKind::kProposed) return v;
    std::vector<S> out(static_cast<std::size_t>(N) * C, S(0));
    if (kind == PolicyKind::kTop1) {
        for (int n = 0; n < N; ++n) {
            const S* row = v.values().data() + static_cast<std::size_t>(n) * C;
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (row[c] > row[best]) best = c;
            out[static_cast<std::size_t>(n) * C + best] = S(1);
        }
    } else {
        if (!labels) throw ContractError("oracle policy requires domain labels");
        if (static_cast<int>(labels->size()) != N) throw ContractError("oracle labels size != batch");
        for (int n = 0; n < N; ++n) {
            const int l = (*labels)[static_cast<std::size_t>(n)];
            if (l < 0 || l >= C) throw ContractError("oracle label out of range");
            out[static_cast<std::size_t>(n) * C + l] = S(1);
        }
    }
    return Tensor<S>::from({N, C}, std::move(out));
}

}  // namespace licda
