#include "daner/objective.hpp"

#include "daner/corpus.hpp"
#include "daner/error.hpp"

namespace daner {

template <typename T>
NodeId ner_loss(Graph<T>& graph, NodeId log_probs, const std::vector<std::int32_t>& tag_ids) {
  bool all_ignored = false;
  NodeId loss = graph.nll_loss(log_probs, tag_ids, EncodedBatch::kIgnore, &all_ignored);
  if (all_ignored)
    fail(ErrorKind::AllIgnored, "source batch contains no labeled tokens");
  return loss;
}

template <typename T>
AdversarialNodes<T> adversarial_loss(Graph<T>& graph, NodeId source_domain_log_probs,
                                     NodeId target_domain_log_probs) {
  const auto& src = graph.value(source_domain_log_probs);
  const auto& tgt = graph.value(target_domain_log_probs);
  if (src.rows() == 0 || tgt.rows() == 0)
    fail(ErrorKind::EmptyBatch, "adversarial loss needs nonempty source and target batches");

  std::vector<std::int32_t> source_labels(static_cast<std::size_t>(src.rows()), 0);
  std::vector<std::int32_t> target_labels(static_cast<std::size_t>(tgt.rows()), 1);
  AdversarialNodes<T> nodes;
  nodes.l_ds = graph.nll_loss(source_domain_log_probs, source_labels, EncodedBatch::kIgnore);
  nodes.l_dt = graph.nll_loss(target_domain_log_probs, target_labels, EncodedBatch::kIgnore);
  nodes.l_adv = graph.add(nodes.l_ds, nodes.l_dt);
  return nodes;
}

template <typename T>
NodeId total_loss(Graph<T>& graph, NodeId l_ner, NodeId l_adv, T alpha) {
  if (alpha < T(0)) fail(ErrorKind::InvalidConfig, "alpha must be >= 0");
  return graph.add(l_ner, graph.scale(l_adv, alpha));
}

template NodeId ner_loss<float>(Graph<float>&, NodeId, const std::vector<std::int32_t>&);
template NodeId ner_loss<double>(Graph<double>&, NodeId, const std::vector<std::int32_t>&);
template AdversarialNodes<float> adversarial_loss<float>(Graph<float>&, NodeId, NodeId);
template AdversarialNodes<double> adversarial_loss<double>(Graph<double>&, NodeId, NodeId);
template NodeId total_loss<float>(Graph<float>&, NodeId, NodeId, float);
template NodeId total_loss<double>(Graph<double>&, NodeId, NodeId, double);

}  // namespace daner
