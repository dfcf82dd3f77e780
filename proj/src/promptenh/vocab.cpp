#include "fgpl/promptenh/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace fgpl::pe {

ModifierVocab::ModifierVocab(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0].effect.kind != EffectKind::End) {
    throw std::invalid_argument("vocab: token 0 must be END");
  }
  for (std::size_t i = 1; i < tokens_.size(); ++i) {
    if (tokens_[i].effect.kind == EffectKind::End) throw std::invalid_argument("vocab: more than one END token");
    for (std::size_t j = 0; j < i; ++j)
      if (tokens_[i].name == tokens_[j].name) throw std::invalid_argument("vocab: duplicate token " + tokens_[i].name);
  }
}

const Token& ModifierVocab::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("unknown modifier token id " + std::to_string(id));
  }
  return tokens_[id];
}

int ModifierVocab::id_of(const std::string& name) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("unknown modifier token " + name);
}

std::string ModifierVocab::describe() const {
  std::ostringstream os;
  for (std::size_t i = 1; i < tokens_.size(); ++i) {
    const auto& e = tokens_[i].effect;
    if (i > 1) os << ';';
    os << tokens_[i].name << '=';
    switch (e.kind) {
      case EffectKind::NoiseScale: os << "scale:" << e.value; break;
      case EffectKind::Guide: os << "guide:" << e.value; break;
      case EffectKind::Drift: os << "drift:" << e.offset << ':' << e.value; break;
      default: os << "noop"; break;
    }
  }
  return os.str();
}

ModifierVocab default_vocab() {
  return parse_vocab(kDefaultVocabSpec);
}

ModifierVocab parse_vocab(const std::string& text) {
  std::vector<Token> tokens = {{"END", {EffectKind::End, 0.0, 0}}};
  std::stringstream ss(text);
  std::string item;
  auto number = [](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("vocab: bad number '" + s + "'");
    return v;
  };
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("vocab: expected name=kind in '" + item + "'");
    Token t{item.substr(0, eq), {}};
    std::vector<std::string> parts;
    std::stringstream ps(item.substr(eq + 1));
    std::string p;
    while (std::getline(ps, p, ':')) parts.push_back(p);
    if (parts.empty()) throw std::invalid_argument("vocab: missing kind in '" + item + "'");
    const std::string& kind = parts[0];
    if (kind == "scale" && parts.size() == 2) {
      t.effect = {EffectKind::NoiseScale, number(parts[1]), 0};
      if (!(t.effect.value > 0.0)) throw std::invalid_argument("vocab: scale must be positive");
    } else if (kind == "guide" && parts.size() == 2) {
      t.effect = {EffectKind::Guide, number(parts[1]), 0};
    } else if (kind == "drift" && parts.size() == 3) {
      t.effect = {EffectKind::Drift, number(parts[2]), static_cast<int>(number(parts[1]))};
    } else if (kind == "noop" && parts.size() == 1) {
      t.effect = {EffectKind::NoOp, 0.0, 0};
    } else {
      throw std::invalid_argument("vocab: bad effect '" + item.substr(eq + 1) + "'");
    }
    tokens.push_back(std::move(t));
  }
  return ModifierVocab(std::move(tokens));
}

namespace {

std::vector<double> mean_embedding(const Tensor& emb) {
  const std::size_t p = emb.rows(), dim = emb.cols();
  std::vector<double> mean(dim, 0.0);
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += emb.values[r * dim + j] / static_cast<double>(p);
  return mean;
}

const Tensor& embeddings(const gen::FlowNet& generator, int prompt) {
  const auto& emb = generator.params().get(generator.name("prompt_emb"));
  if (prompt < 0 || static_cast<std::size_t>(prompt) >= emb.rows()) {
    throw std::out_of_range("unknown prompt id " + std::to_string(prompt));
  }
  return emb;
}

}  // namespace

Conditioning user_conditioning(const gen::FlowNet& generator, int prompt, double vagueness) {
  if (!(vagueness >= 0.0 && vagueness < 1.0)) throw std::invalid_argument("vagueness must lie in [0, 1)");
  const Tensor& emb = embeddings(generator, prompt);
  const std::size_t dim = emb.cols();
  const auto mean = mean_embedding(emb);
  Conditioning c{Tensor::zeros({1, dim}), 1.0};
  for (std::size_t j = 0; j < dim; ++j) {
    const double e = emb.values[prompt * dim + j];
    c.cond.values[j] = vagueness == 0.0 ? e : (1.0 - vagueness) * e + vagueness * mean[j];
  }
  return c;
}

Conditioning apply_effects(const gen::FlowNet& generator, const ModifierVocab& vocab, int prompt,
                           std::span<const int> y, double vagueness) {
  const Tensor& emb = embeddings(generator, prompt);
  const std::size_t p = emb.rows(), dim = emb.cols();
  auto row = [&](std::size_t r) {
    return std::vector<double>(emb.values.begin() + r * dim, emb.values.begin() + (r + 1) * dim);
  };
  const auto mean = mean_embedding(emb);
  Conditioning c = user_conditioning(generator, prompt, vagueness);
  auto& v = c.cond.values;
  for (int id : y) {
    const Effect& e = vocab.at(id).effect;
    if (e.kind == EffectKind::End) break;
    switch (e.kind) {
      case EffectKind::NoiseScale: c.noise_scale *= e.value; break;
      case EffectKind::Guide:
        for (std::size_t j = 0; j < dim; ++j) v[j] += e.value * (v[j] - mean[j]);
        break;
      case EffectKind::Drift: {
        const int n = static_cast<int>(p);
        const auto other = row(static_cast<std::size_t>(((prompt + e.offset) % n + n) % n));
        for (std::size_t j = 0; j < dim; ++j) v[j] = (1.0 - e.value) * v[j] + e.value * other[j];
        break;
      }
      default: break;
    }
  }
  return c;
}

}  // namespace fgpl::pe
