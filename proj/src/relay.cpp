#include "semrelay/relay.hpp"

#include <cmath>

namespace semrelay::relay {

using nn::Graph;
using nn::Matrix;
using nn::RowVector;
using nn::Var;

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::slf: return "slf";
    case Scheme::spf: return "spf";
    case Scheme::source_only: return "source_only";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "slf") return Scheme::slf;
  if (s == "spf") return Scheme::spf;
  if (s == "source_only" || s == "source-only") return Scheme::source_only;
  throw Error("unknown scheme: " + s);
}

std::string to_string(Link l) {
  switch (l) {
    case Link::sr: return "SR";
    case Link::sd: return "SD";
    case Link::rd: return "RD";
  }
  return "?";
}

std::vector<int> EpisodeTrace::relay_transmissions() const {
  std::vector<int> out(slots.size(), -1);
  for (const auto& slot : slots) {
    for (const auto& tx : slot.transmissions) {
      if (tx.from == NodeId::relay) out[slot.index] = tx.payload;
    }
  }
  return out;
}

std::vector<int> relay_input_indices(Scheme scheme, int length) {
  std::vector<int> idx(length);
  const int first = scheme == Scheme::spf ? 0 : 1;
  for (int k = 0; k < length; ++k) idx[k] = first + k;
  return idx;
}

EpisodeLinks draw_episode_links(Scheme scheme, int length, const LinkGeometry& geometry,
                                const ChannelParams& params, int uses, Rng& rng) {
  EpisodeLinks links;
  auto draw = [&](double d) { return channel::realize_link(d, uses, params, rng); };
  if (scheme == Scheme::spf) {
    links.sr.push_back(draw(geometry.d_sr));  // slot 0, [CLS] to the relay only
    for (int t = 1; t <= length; ++t) {
      if (t < length) links.sr.push_back(draw(geometry.d_sr));
      links.sd.push_back(draw(geometry.d_sd));
      links.rd.push_back(draw(geometry.d_rd));
    }
  } else {
    for (int t = 1; t <= length; ++t) {
      links.sr.push_back(draw(geometry.d_sr));
      links.sd.push_back(draw(geometry.d_sd));
      links.rd.push_back(draw(geometry.d_rd));
    }
  }
  return links;
}

RowVector send_block(const RowVector& encoded, const LinkRealization& link, const ChannelParams& params) {
  std::vector<double> v(encoded.data(), encoded.data() + encoded.size());
  auto x = channel::apply_power_constraint(v, params);
  auto y = channel::renormalize_received(channel::transmit(x.block, link, params), link, params);
  auto reals = y.to_reals();
  return Eigen::Map<const RowVector>(reals.data(), static_cast<Eigen::Index>(reals.size()));
}

Var send_rows(Graph& g, Var encoded, const std::vector<const LinkRealization*>& links,
              const ChannelParams& params) {
  const Matrix& x = g.value(encoded);
  if (static_cast<Eigen::Index>(links.size()) != x.rows()) throw Error("send_rows: one link per row");
  const double sqrt_p = std::sqrt(params.tx_power_watts());
  std::vector<channel::Complex> factors(links.size());
  Matrix noise(x.rows(), x.cols());
  for (std::size_t r = 0; r < links.size(); ++r) {
    const LinkRealization& link = *links[r];
    if (static_cast<Eigen::Index>(2 * link.noise.size()) != x.cols()) {
      throw Error("send_rows: link realization does not match the block length");
    }
    const double norm = 1.0 / (sqrt_p * link.amplitude);
    factors[r] = channel::effective_gain(link, params) * norm;
    const channel::Complex nf = channel::noise_factor(link, params) * norm;
    for (std::size_t i = 0; i < link.noise.size(); ++i) {
      const channel::Complex z = link.noise[i] * nf;
      noise(static_cast<Eigen::Index>(r), 2 * i) = z.real();
      noise(static_cast<Eigen::Index>(r), 2 * i + 1) = z.imag();
    }
  }
  Var y = nn::power_normalize_rows(g, encoded, params.tx_power_watts());
  y = nn::complex_scale_rows(g, y, factors);
  return nn::add(g, y, g.constant(std::move(noise)));
}

namespace {

Matrix codec_rows(const semnet::CodecLayer& layer, const Matrix& x) {
  Graph g(false);
  return g.value(layer.forward(g, g.constant(x)));
}

Matrix fuse_rows(const semnet::Model& model, const Matrix& y_source, const Matrix& y_relay) {
  Graph g(false);
  Var a = model.dest_source_rx.forward(g, g.constant(y_source));
  Var b = model.dest_relay_rx.forward(g, g.constant(y_relay));
  return g.value(model.fusion.forward(g, a, b));
}

void validate_inputs(const TokenSeq& sentence, const LinkGeometry& geometry, const semnet::Model& model) {
  geometry.validate();
  if (sentence.empty()) throw Error("episode needs a non-empty sentence");
  if (static_cast<int>(sentence.size()) > model.config().max_len) throw Error("sentence exceeds max_len");
}

}  // namespace

EpisodeTrace run_episode(Scheme scheme, const TokenSeq& sentence, const LinkGeometry& geometry,
                         const ChannelParams& params, const semnet::Model& model,
                         const EpisodeLinks& links) {
  validate_inputs(sentence, geometry, model);
  const int T = static_cast<int>(sentence.size());
  const int width = model.config().channel_dim;
  const auto relay_idx = relay_input_indices(scheme, T);
  if (static_cast<int>(links.sr.size()) != T || static_cast<int>(links.sd.size()) != T ||
      static_cast<int>(links.rd.size()) != T) {
    throw Error("episode link realizations do not match the sentence length");
  }

  EpisodeTrace trace;
  trace.scheme = scheme;
  trace.geometry = geometry;

  const Matrix embeddings = semnet::semantic_encode(model, sentence, false);
  const Matrix source_blocks = codec_rows(model.source_tx, embeddings);

  // Relay: decode (SLF) or predict (SPF), then re-encode causally.
  Matrix relay_blocks = Matrix::Zero(T, width);
  if (scheme != Scheme::source_only) {
    Matrix received(T, width);
    for (int k = 0; k < T; ++k) {
      received.row(k) = send_block(source_blocks.row(relay_idx[k]), links.sr[k], params);
    }
    trace.relay_tokens = semnet::greedy_decode(model, semnet::DecoderSite::relay,
                                               codec_rows(model.relay_rx, received));
    const Matrix relay_embeddings = semnet::semantic_encode(model, trace.relay_tokens, true);
    relay_blocks = codec_rows(model.relay_tx, relay_embeddings.bottomRows(T));
  }

  // Destination: fuse both branches per token, then decode with its state.
  Matrix y_source(T, width);
  Matrix y_relay = Matrix::Zero(T, width);
  for (int t = 1; t <= T; ++t) {
    y_source.row(t - 1) = send_block(source_blocks.row(t), links.sd[t - 1], params);
    if (scheme != Scheme::source_only) {
      y_relay.row(t - 1) = send_block(relay_blocks.row(t - 1), links.rd[t - 1], params);
    }
  }
  trace.destination_tokens =
      semnet::greedy_decode(model, semnet::DecoderSite::destination, fuse_rows(model, y_source, y_relay));

  // Slot accounting.
  if (scheme == Scheme::spf) {
    trace.slots.push_back({0, {{NodeId::source, {Link::sr}, 0, {links.sr[0].fading}}}});
    for (int t = 1; t <= T; ++t) {
      SlotRecord slot{t, {}};
      if (t < T) {
        slot.transmissions.push_back(
            {NodeId::source, {Link::sr, Link::sd}, t, {links.sr[t].fading, links.sd[t - 1].fading}});
      } else {
        slot.transmissions.push_back({NodeId::source, {Link::sd}, t, {links.sd[t - 1].fading}});
      }
      slot.transmissions.push_back(
          {NodeId::relay, {Link::rd}, trace.relay_tokens[t - 1], {links.rd[t - 1].fading}});
      trace.slots.push_back(std::move(slot));
    }
  } else {
    for (int t = 1; t <= T; ++t) {
      trace.slots.push_back({2 * t - 2,
                             {{NodeId::source, {Link::sr, Link::sd}, t,
                               {links.sr[t - 1].fading, links.sd[t - 1].fading}}}});
      SlotRecord forward{2 * t - 1, {}};
      if (scheme == Scheme::slf) {
        forward.transmissions.push_back(
            {NodeId::relay, {Link::rd}, trace.relay_tokens[t - 1], {links.rd[t - 1].fading}});
      }
      trace.slots.push_back(std::move(forward));
    }
  }
  return trace;
}

EpisodeTrace run_episode(Scheme scheme, const TokenSeq& sentence, const LinkGeometry& geometry,
                         const ChannelParams& params, const semnet::Model& model, Rng& rng) {
  validate_inputs(sentence, geometry, model);
  auto links = draw_episode_links(scheme, static_cast<int>(sentence.size()), geometry, params,
                                  model.config().channel_dim / 2, rng);
  return run_episode(scheme, sentence, geometry, params, model, links);
}

EpisodeTrace run_slf_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                             const ChannelParams& params, const semnet::Model& model, Rng& rng) {
  return run_episode(Scheme::slf, sentence, geometry, params, model, rng);
}

EpisodeTrace run_spf_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                             const ChannelParams& params, const semnet::Model& model, Rng& rng) {
  return run_episode(Scheme::spf, sentence, geometry, params, model, rng);
}

EpisodeTrace run_source_only_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                                     const ChannelParams& params, const semnet::Model& model,
                                     Rng& rng) {
  return run_episode(Scheme::source_only, sentence, geometry, params, model, rng);
}

void write_trace(std::ostream& out, const EpisodeTrace& trace) {
  out << "episode scheme=" << to_string(trace.scheme) << " d_sd=" << trace.geometry.d_sd
      << " d_sr=" << trace.geometry.d_sr << " d_rd=" << trace.geometry.d_rd
      << " T=" << trace.destination_tokens.size() << " slots=" << trace.slot_count() << '\n';
  for (const auto& slot : trace.slots) {
    out << "slot " << slot.index;
    if (slot.transmissions.empty()) out << " silent";
    for (const auto& tx : slot.transmissions) {
      out << (tx.from == NodeId::source ? " source" : " relay") << " links=";
      for (std::size_t i = 0; i < tx.links.size(); ++i) {
        out << (i ? "," : "") << to_string(tx.links[i]);
      }
      out << (tx.from == NodeId::source ? " embedding=" : " token=") << tx.payload;
      out << " |h|=";
      for (std::size_t i = 0; i < tx.fading.size(); ++i) out << (i ? "," : "") << std::abs(tx.fading[i]);
      out << ';';
    }
    out << '\n';
  }
  out << "relay_tokens";
  for (auto w : trace.relay_tokens) out << ' ' << w;
  out << "\ndestination_tokens";
  for (auto w : trace.destination_tokens) out << ' ' << w;
  out << '\n';
}

}  // namespace semrelay::relay
