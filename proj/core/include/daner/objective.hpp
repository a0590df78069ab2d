#pragma once

#include <cstdint>
#include <vector>

#include "daner/graph.hpp"

namespace daner {

/// The scalar components of one training step's loss, as computed (the
/// total equals l_ner + alpha * l_adv in the step's own precision).
template <typename T>
struct LossBreakdown {
  T l_ner = T(0);
  T l_ds = T(0);   // source-domain NLL of the discriminator
  T l_dt = T(0);   // target-domain NLL of the discriminator
  T l_adv = T(0);  // l_ds + l_dt
  T alpha = T(0);
  T l_total = T(0);
};

/// Token-level NLL over non-ignored positions of the source batch.
/// Throws AllIgnored when no position is scored.
template <typename T>
NodeId ner_loss(Graph<T>& graph, NodeId log_probs, const std::vector<std::int32_t>& tag_ids);

template <typename T>
struct AdversarialNodes {
  NodeId l_ds = -1;
  NodeId l_dt = -1;
  NodeId l_adv = -1;
};

/// Discriminator NLL with fixed domain labels: source rows are class 0,
/// target rows class 1; l_adv = l_ds + l_dt. The min-max between the
/// discriminator and the feature extractor is realized entirely by the
/// gradient-reversal layer upstream -- one backward pass serves both sides.
template <typename T>
AdversarialNodes<T> adversarial_loss(Graph<T>& graph, NodeId source_domain_log_probs,
                                     NodeId target_domain_log_probs);

/// l_ner + alpha * l_adv. alpha = 0 reduces to the non-adaptive objective.
template <typename T>
NodeId total_loss(Graph<T>& graph, NodeId l_ner, NodeId l_adv, T alpha);

/// Plain-value counterpart of total_loss, for reporting and tests.
template <typename T>
T combine_total(T l_ner, T l_adv, T alpha) {
  return l_ner + alpha * l_adv;
}

extern template NodeId ner_loss<float>(Graph<float>&, NodeId, const std::vector<std::int32_t>&);
extern template NodeId ner_loss<double>(Graph<double>&, NodeId, const std::vector<std::int32_t>&);
extern template AdversarialNodes<float> adversarial_loss<float>(Graph<float>&, NodeId, NodeId);
extern template AdversarialNodes<double> adversarial_loss<double>(Graph<double>&, NodeId, NodeId);
extern template NodeId total_loss<float>(Graph<float>&, NodeId, NodeId, float);
extern template NodeId total_loss<double>(Graph<double>&, NodeId, NodeId, double);

}  // namespace daner
