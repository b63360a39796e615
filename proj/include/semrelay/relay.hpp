#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "semrelay/channel.hpp"
#include "semrelay/nn/graph.hpp"
#include "semrelay/semnet.hpp"

namespace semrelay::relay {

using channel::ChannelParams;
using channel::LinkGeometry;
using channel::LinkRealization;
using channel::Rng;

enum class Scheme { slf, spf, source_only };
std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

enum class Link { sr, sd, rd };
std::string to_string(Link l);

enum class NodeId { source, relay };

struct Transmission {
  NodeId from = NodeId::source;
  std::vector<Link> links;
  // Source: index t of the embedding sent (0 = [CLS]). Relay: decided token.
  int payload = 0;
  std::vector<channel::Complex> fading;  // one per link
};

struct SlotRecord {
  int index = 0;
  std::vector<Transmission> transmissions;  // empty when every node is silent
};

struct EpisodeTrace {
  Scheme scheme = Scheme::slf;
  LinkGeometry geometry;
  std::vector<SlotRecord> slots;
  TokenSeq relay_tokens;        // decoded (SLF) or predicted (SPF) at the relay
  TokenSeq destination_tokens;  // reconstruction
  int slot_count() const { return static_cast<int>(slots.size()); }
  // Relay's transmitted token per slot index (-1 when the relay is silent).
  std::vector<int> relay_transmissions() const;
};

// Every random link realization an episode consumes, drawn in slot order.
struct EpisodeLinks {
  std::vector<LinkRealization> sr;  // indexed by source embedding index
  std::vector<LinkRealization> sd;  // indexed by t-1
  std::vector<LinkRealization> rd;  // indexed by t-1
};

EpisodeLinks draw_episode_links(Scheme scheme, int length, const LinkGeometry& geometry,
                                const ChannelParams& params, int uses, Rng& rng);

// Source embedding indices carried on the source->relay link.
// SLF/source-only: 1..T. SPF: 0..T-1.
std::vector<int> relay_input_indices(Scheme scheme, int length);

EpisodeTrace run_episode(Scheme scheme, const TokenSeq& sentence, const LinkGeometry& geometry,
                         const ChannelParams& params, const semnet::Model& model,
                         const EpisodeLinks& links);

EpisodeTrace run_slf_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                             const ChannelParams& params, const semnet::Model& model, Rng& rng);
EpisodeTrace run_spf_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                             const ChannelParams& params, const semnet::Model& model, Rng& rng);
EpisodeTrace run_source_only_episode(const TokenSeq& sentence, const LinkGeometry& geometry,
                                     const ChannelParams& params, const semnet::Model& model,
                                     Rng& rng);
EpisodeTrace run_episode(Scheme scheme, const TokenSeq& sentence, const LinkGeometry& geometry,
                         const ChannelParams& params, const semnet::Model& model, Rng& rng);

void write_trace(std::ostream& out, const EpisodeTrace& trace);

// ---- Shared by training and inference -----------------------------------------

// Power constraint, channel and receiver renormalization applied to a single
// block through the channel module.
nn::RowVector send_block(const nn::RowVector& encoded, const LinkRealization& link,
                         const ChannelParams& params);

// Same chain on a graph, one token block per row of `encoded` and one link
// realization per row; differentiable with respect to `encoded`.
nn::Var send_rows(nn::Graph& g, nn::Var encoded, const std::vector<const LinkRealization*>& links,
                  const ChannelParams& params);

}  // namespace semrelay::relay
