#pragma once

#include <span>
#include <string>
#include <vector>

#include "fgpl/diffcore/tensor.hpp"
#include "fgpl/genmodel/flow_net.hpp"

namespace fgpl::pe {

enum class EffectKind { End, NoiseScale, Guide, Drift, NoOp };

// What a modifier token does to the frozen generator's conditioning.
struct Effect {
  EffectKind kind = EffectKind::NoOp;
  double value = 0.0;  // scale factor, guidance weight or mixing weight
  int offset = 0;      // Drift: neighbouring prompt id offset
};

struct Token {
  std::string name;
  Effect effect;
};

// Token 0 is always END; exactly one END exists.
class ModifierVocab {
 public:
  explicit ModifierVocab(std::vector<Token> tokens);

  std::size_t size() const { return tokens_.size(); }
  const Token& at(int id) const;  // throws std::out_of_range
  int id_of(const std::string& name) const;
  const std::vector<Token>& tokens() const { return tokens_; }
  std::string describe() const;

 private:
  std::vector<Token> tokens_;
};

inline constexpr const char* kDefaultVocabSpec =
    "tighten=scale:0.7;sharpen=scale:0.85;guide=guide:0.5;brighten=noop;"
    "drift+=drift:1:0.5;drift-=drift:-1:0.5";

// END, tighten, sharpen, guide, brighten, drift+, drift-.
ModifierVocab default_vocab();

// "name=kind[:a[:b]]" entries separated by ';', END implied first. Kinds:
// scale:f, guide:w, drift:offset:mix, noop. Throws std::invalid_argument.
ModifierVocab parse_vocab(const std::string& text);

inline constexpr int kEnd = 0;

// Conditioning handed to the generator.
struct Conditioning {
  Tensor cond;              // [1, prompt_dim]
  double noise_scale = 1.0;
};

// A user's raw request for prompt P: its embedding blended toward the mean
// embedding by `vagueness` in [0, 1). Deployment inputs are terse; the
// training conditioning corresponds to vagueness 0.
Conditioning user_conditioning(const gen::FlowNet& generator, int prompt, double vagueness);

// Applies the effects of y (END and anything after it ignored) on top of the
// user conditioning.
Conditioning apply_effects(const gen::FlowNet& generator, const ModifierVocab& vocab, int prompt,
                           std::span<const int> y, double vagueness = 0.0);

}  // namespace fgpl::pe
