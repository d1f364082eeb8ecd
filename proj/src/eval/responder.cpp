#include "molllama/eval/responder.hpp"

#include <algorithm>

namespace molllama::eval {

std::string MolLlamaResponder::generate(const ModelQuery& query) {
  std::vector<ag::Tensor> embeds;
  {
    ag::NoGradGuard no_grad;
    for (const auto& rec : query.molecules) {
      auto it = cache_.find(rec.id);
      if (it == cache_.end() || rec.id.empty()) {
        it = cache_.insert_or_assign(rec.id, model_.lm_queries(model_.encode(rec))).first;
      }
      embeds.push_back(it->second);
    }
  }
  RenderedChat prompt = render_chat(query.chat, model_.config().qformer.n_queries, true);
  for (int id : tok::tokenize(query.assistant_prefix)) {
    prompt.ids.push_back(id);
    prompt.loss_mask.push_back(false);
  }
  DecodeOptions opt = options_;
  const int room = model_.config().lm.max_seq_len - static_cast<int>(prompt.ids.size());
  opt.max_new = std::min(opt.max_new, std::max(room, 0));
  if (opt.max_new == 0) return {};
  return molllama::generate(model_.lm(), prompt, embeds, opt);
}

}  // namespace molllama::eval
