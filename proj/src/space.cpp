#include "zcpt/space.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "zcpt/rng.hpp"

namespace zcpt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

const char* nb201_token(OpId o) {
  switch (o) {
    case OpId::none: return "none";
    case OpId::skip_connect: return "skip_connect";
    case OpId::nor_conv_1x1: return "nor_conv_1x1";
    case OpId::nor_conv_3x3: return "nor_conv_3x3";
    case OpId::avg_pool_3x3: return "avg_pool_3x3";
  }
  return "?";
}

const char* toy_token(OpId o) {
  switch (o) {
    case OpId::skip_connect: return "skip";
    case OpId::nor_conv_1x1: return "conv_1x1";
    case OpId::nor_conv_3x3: return "conv_3x3";
    case OpId::avg_pool_3x3: return "avg_pooling";
    case OpId::none: return "none";
  }
  return "?";
}

}  // namespace

std::string SpaceDesc::op_token(OpId o) const {
  return kind == SpaceKind::ToyChain ? toy_token(o) : nb201_token(o);
}

OpId SpaceDesc::op_from_token(const std::string& tok) const {
  for (OpId o : ops)
    if (op_token(o) == tok) return o;
  throw std::invalid_argument("unknown op token: '" + tok + "'");
}

std::shared_ptr<const SpaceDesc> SpaceDesc::nb201() {
  auto s = std::make_shared<SpaceDesc>();
  s->kind = SpaceKind::NB201;
  s->ops = {OpId::none, OpId::skip_connect, OpId::nor_conv_1x1, OpId::nor_conv_3x3,
            OpId::avg_pool_3x3};
  s->edges = {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}};
  s->num_inter_nodes = 3;
  return s;
}

std::shared_ptr<const SpaceDesc> SpaceDesc::toy_chain(int layers, int num_ops) {
  require(layers >= 1, "toy chain needs at least one layer");
  require(num_ops >= 1 && num_ops <= 4, "toy chain supports 1..4 candidate ops");
  auto s = std::make_shared<SpaceDesc>();
  s->kind = SpaceKind::ToyChain;
  const std::vector<OpId> all = {OpId::skip_connect, OpId::nor_conv_1x1, OpId::nor_conv_3x3,
                                 OpId::avg_pool_3x3};
  s->ops.assign(all.begin(), all.begin() + num_ops);
  for (int i = 0; i < layers; ++i) s->edges.push_back({i + 1, i});
  return s;
}

std::shared_ptr<const SpaceDesc> SpaceDesc::darts_like(int inter_nodes, std::vector<OpId> ops) {
  require(inter_nodes >= 1, "darts-like cell needs intermediate nodes");
  require(!ops.empty(), "empty candidate set");
  auto s = std::make_shared<SpaceDesc>();
  s->kind = SpaceKind::DartsLike;
  s->ops = std::move(ops);
  s->num_inter_nodes = inter_nodes;
  for (int to = 1; to <= inter_nodes; ++to)
    for (int from = 0; from < to; ++from) s->edges.push_back({to, from});
  return s;
}

ArchState ArchState::supernet(std::shared_ptr<const SpaceDesc> s) {
  ArchState a;
  a.space = std::move(s);
  a.edges.resize(static_cast<std::size_t>(a.space->num_edges()));
  for (auto& e : a.edges) e.active = a.space->ops;
  return a;
}

bool ArchState::fully_discretized() const {
  for (const auto& e : edges)
    if (!e.fixed) return false;
  return true;
}

std::vector<int> ArchState::mixed_edges() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(edges.size()); ++i)
    if (!edges[static_cast<std::size_t>(i)].fixed) out.push_back(i);
  return out;
}

bool ArchState::operator==(const ArchState& o) const {
  if (space->kind != o.space->kind || edges.size() != o.edges.size()) return false;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& a = edges[i];
    const auto& b = o.edges[i];
    if (a.fixed != b.fixed || a.enabled != b.enabled || a.active != b.active) return false;
  }
  return true;
}

std::size_t ArchState::hash() const {
  std::uint64_t h = static_cast<std::uint64_t>(space->kind) + 1;
  for (const auto& e : edges) {
    h = hash64(h, e.fixed ? 0x66 : 0x6d);
    h = hash64(h, e.enabled ? 1 : 0);
    for (OpId o : e.active) h = hash64(h, static_cast<std::uint64_t>(o) + 17);
  }
  return static_cast<std::size_t>(h);
}

ArchState discretize(const ArchState& a, int edge, OpId o) {
  require(edge >= 0 && edge < static_cast<int>(a.edges.size()), "edge id out of range");
  const auto& es = a.edges[static_cast<std::size_t>(edge)];
  require(!es.fixed, "discretize: edge already fixed");
  require(std::find(es.active.begin(), es.active.end(), o) != es.active.end(),
          "discretize: op not in active set");
  ArchState out = a;
  auto& oe = out.edges[static_cast<std::size_t>(edge)];
  oe.active = {o};
  oe.fixed = true;
  out.t += 1;
  return out;
}

ArchState perturb(const ArchState& a, int edge, OpId o) {
  require(edge >= 0 && edge < static_cast<int>(a.edges.size()), "edge id out of range");
  const auto& es = a.edges[static_cast<std::size_t>(edge)];
  require(!es.fixed, "perturb: edge is fixed");
  require(es.active.size() >= 2, "perturb: cannot remove the last op of an edge");
  auto it = std::find(es.active.begin(), es.active.end(), o);
  require(it != es.active.end(), "perturb: op not in active set");
  ArchState out = a;
  auto& oe = out.edges[static_cast<std::size_t>(edge)];
  oe.active.erase(oe.active.begin() + (it - es.active.begin()));
  return out;
}

ArchState disable_edge(const ArchState& a, int edge) {
  require(edge >= 0 && edge < static_cast<int>(a.edges.size()), "edge id out of range");
  ArchState out = a;
  out.edges[static_cast<std::size_t>(edge)].enabled = false;
  return out;
}

// ---------------------------------------------------------------------------
// genotype encoding

Genotype encode_genotype(const ArchState& a) {
  require(a.fully_discretized(), "encode_genotype requires a fully discretized state");
  const SpaceDesc& sp = *a.space;
  std::ostringstream os;
  if (sp.kind == SpaceKind::ToyChain) {
    for (std::size_t i = 0; i < a.edges.size(); ++i)
      os << (i ? "|" : "") << sp.op_token(a.edges[i].active[0]);
    return os.str();
  }
  // NB201 / darts-like grammar: groups per intermediate node
  for (int to = 1; to <= sp.num_inter_nodes; ++to) {
    if (to > 1) os << "+";
    for (int e = 0; e < sp.num_edges(); ++e) {
      const auto& ed = sp.edges[static_cast<std::size_t>(e)];
      if (ed.to != to) continue;
      const auto& es = a.edges[static_cast<std::size_t>(e)];
      if (!es.enabled) continue;
      os << "|" << sp.op_token(es.active[0]) << "~" << ed.from;
    }
    os << "|";
  }
  return os.str();
}

ArchState parse_genotype(std::shared_ptr<const SpaceDesc> space, const Genotype& s) {
  const SpaceDesc& sp = *space;
  ArchState a = ArchState::supernet(space);
  if (sp.kind == SpaceKind::ToyChain) {
    std::stringstream ss(s);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, '|')) {
      require(i < a.edges.size(), "genotype has more ops than edges: '" + s + "'");
      a.edges[i].active = {sp.op_from_token(tok)};
      a.edges[i].fixed = true;
      ++i;
    }
    require(i == a.edges.size(), "genotype has fewer ops than edges: '" + s + "'");
    a.t = static_cast<int>(i);
    return a;
  }
  // mark everything disabled, re-enable as tokens are consumed
  for (auto& e : a.edges) e.enabled = false;
  std::stringstream ss(s);
  std::string group;
  int to = 1;
  while (std::getline(ss, group, '+')) {
    require(to <= sp.num_inter_nodes, "genotype has too many node groups: '" + s + "'");
    std::stringstream gs(group);
    std::string tok;
    while (std::getline(gs, tok, '|')) {
      if (tok.empty()) continue;
      const auto tilde = tok.find('~');
      require(tilde != std::string::npos, "malformed genotype token: '" + tok + "'");
      const OpId op = sp.op_from_token(tok.substr(0, tilde));
      int from = -1;
      try {
        from = std::stoi(tok.substr(tilde + 1));
      } catch (const std::exception&) {
        throw std::invalid_argument("malformed source index in token: '" + tok + "'");
      }
      int edge = -1;
      for (int e = 0; e < sp.num_edges(); ++e)
        if (sp.edges[static_cast<std::size_t>(e)].to == to &&
            sp.edges[static_cast<std::size_t>(e)].from == from)
          edge = e;
      require(edge >= 0, "no such edge in space: '" + tok + "'");
      auto& es = a.edges[static_cast<std::size_t>(edge)];
      require(!es.enabled || !es.fixed, "duplicate edge in genotype: '" + tok + "'");
      es.active = {op};
      es.fixed = true;
      es.enabled = true;
    }
    ++to;
  }
  require(to == sp.num_inter_nodes + 1, "genotype has too few node groups: '" + s + "'");
  if (sp.kind == SpaceKind::NB201)
    for (const auto& e : a.edges)
      require(e.enabled && e.fixed, "NB201 genotype must assign every edge: '" + s + "'");
  // disabled edges (pruned topology) still count as decided
  for (auto& e : a.edges)
    if (!e.enabled) {
      e.fixed = true;
      e.active = {sp.ops[0]};
    }
  a.t = sp.num_edges();
  return a;
}

std::vector<Genotype> enumerate_space(const std::shared_ptr<const SpaceDesc>& space) {
  const int E = space->num_edges();
  const int K = space->num_ops();
  std::vector<int> odo(static_cast<std::size_t>(E), 0);
  std::vector<Genotype> out;
  for (;;) {
    ArchState a = ArchState::supernet(space);
    for (int e = 0; e < E; ++e)
      a = discretize(a, e, space->ops[static_cast<std::size_t>(odo[static_cast<std::size_t>(e)])]);
    out.push_back(encode_genotype(a));
    int i = E - 1;
    while (i >= 0 && odo[static_cast<std::size_t>(i)] == K - 1) odo[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    odo[static_cast<std::size_t>(i)] += 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// instantiation

namespace {

struct Builder {
  Graph g;
  int fisher_n = 0;
  bool plain_convs = false;  // toy chain: conv ops without batchnorm

  int op_out(int x, OpId op, int width, const std::string& pname) {
    switch (op) {
      case OpId::none:
        return g.scale(x, 0.0);
      case OpId::skip_connect:
        return x;
      case OpId::nor_conv_1x1:
      case OpId::nor_conv_3x3: {
        const int k = op == OpId::nor_conv_1x1 ? 1 : 3;
        int y = g.relu(x);
        y = g.conv2d(y, width, k, 1, pname + ".conv");
        if (!plain_convs) y = g.batchnorm(y, pname + ".bn");
        g.set_tap(y, "fisher" + std::to_string(fisher_n++));
        return y;
      }
      case OpId::avg_pool_3x3:
        return g.avgpool3x3(x);
    }
    throw std::logic_error("unreachable op");
  }

  int edge_out(int x, const EdgeState& es, const SpaceDesc& sp, int width,
               const std::string& pname) {
    int acc = -1;
    for (OpId op : es.active) {
      const int y = op_out(x, op, width, pname + "." + nb201_token(op));
      acc = acc < 0 ? y : g.add(acc, y);
    }
    if (es.active.size() > 1) acc = g.scale(acc, 1.0 / static_cast<double>(es.active.size()));
    (void)sp;
    return acc;
  }

  // sum of enabled incoming edge outputs per intermediate node
  std::vector<int> cell_nodes(int x0, const ArchState& a, int width, const std::string& prefix) {
    const SpaceDesc& sp = *a.space;
    std::vector<int> nodeval(static_cast<std::size_t>(sp.num_inter_nodes) + 1, -1);
    nodeval[0] = x0;
    for (int to = 1; to <= sp.num_inter_nodes; ++to) {
      int acc = -1;
      for (int e = 0; e < sp.num_edges(); ++e) {
        const auto& ed = sp.edges[static_cast<std::size_t>(e)];
        if (ed.to != to) continue;
        const auto& es = a.edges[static_cast<std::size_t>(e)];
        if (!es.enabled) continue;
        const int y = edge_out(nodeval[static_cast<std::size_t>(ed.from)], es, sp, width,
                               prefix + ".e" + std::to_string(e));
        acc = acc < 0 ? y : g.add(acc, y);
      }
      nodeval[static_cast<std::size_t>(to)] = acc < 0 ? g.scale(x0, 0.0) : acc;
    }
    return nodeval;
  }

  int reduction(int x, int out_width, const std::string& prefix) {
    int y = g.relu(x);
    y = g.conv2d(y, out_width, 3, 2, prefix + ".conv1");
    y = g.batchnorm(y, prefix + ".bn1");
    y = g.relu(y);
    y = g.conv2d(y, out_width, 3, 1, prefix + ".conv2");
    y = g.batchnorm(y, prefix + ".bn2");
    const int s = g.conv2d(x, out_width, 1, 2, prefix + ".short");
    return g.add(y, s);
  }
};

}  // namespace

ExecutableNet instantiate(const ArchState& a, const InstantiateCfg& cfg, std::uint64_t seed) {
  require(cfg.width >= 1 && cfg.cells_per_stage >= 1 && cfg.image_size >= 4,
          "invalid instantiation configuration");
  const SpaceDesc& sp = *a.space;
  Builder b;
  const int in = b.g.add_input({1, cfg.input_channels, cfg.image_size, cfg.image_size});
  int x = b.g.conv2d(in, cfg.width, 3, 1, "stem.conv");
  x = b.g.batchnorm(x, "stem.bn");

  switch (sp.kind) {
    case SpaceKind::NB201: {
      int width = cfg.width;
      for (int stage = 0; stage < 3; ++stage) {
        for (int cell = 0; cell < cfg.cells_per_stage; ++cell) {
          auto nodes = b.cell_nodes(
              x, a, width, "s" + std::to_string(stage) + ".c" + std::to_string(cell));
          x = nodes.back();
        }
        if (stage < 2) {
          width *= 2;
          x = b.reduction(x, width, "red" + std::to_string(stage));
        }
      }
      break;
    }
    case SpaceKind::ToyChain: {
      b.plain_convs = true;
      x = b.g.relu(x);
      for (int e = 0; e < sp.num_edges(); ++e)
        x = b.edge_out(x, a.edges[static_cast<std::size_t>(e)], sp, cfg.width,
                       "l" + std::to_string(e));
      break;
    }
    case SpaceKind::DartsLike: {
      auto nodes = b.cell_nodes(x, a, cfg.width, "cell");
      int cat = nodes[1];
      for (int k = 2; k <= sp.num_inter_nodes; ++k)
        cat = b.g.concat(cat, nodes[static_cast<std::size_t>(k)]);
      x = cat;
      break;
    }
  }

  x = b.g.relu(x);
  x = b.g.global_avg_pool(x);
  const int logits = b.g.linear(x, cfg.num_classes, "head");
  (void)logits;

  // name every rectifier so activation taps are addressable
  int rid = 0;
  for (int nid : b.g.nodes_of_kind(NodeKind::Relu))
    b.g.set_tap(nid, "relu" + std::to_string(rid++));

  b.g.init_params(seed);
  ExecutableNet net;
  net.graph = std::move(b.g);
  net.input_shape = {1, cfg.input_channels, cfg.image_size, cfg.image_size};
  net.num_classes = cfg.num_classes;
  return net;
}

ArchState topology_prune(const ArchState& a,
                         const std::function<double(const ArchState&)>& removal_score,
                         std::uint64_t seed) {
  require(a.space->kind == SpaceKind::DartsLike,
          "topology_prune requires a space with node topology choice");
  require(a.fully_discretized(), "topology_prune requires a fully discretized state");
  ArchState cur = a;
  std::vector<int> nodes;
  for (int k = 1; k <= a.space->num_inter_nodes; ++k) nodes.push_back(k);
  Rng rng(hash64(seed, 0x746f706fULL));
  rng.shuffle(nodes);
  for (int node : nodes) {
    std::vector<int> incoming;
    for (int e = 0; e < a.space->num_edges(); ++e)
      if (a.space->edges[static_cast<std::size_t>(e)].to == node &&
          cur.edges[static_cast<std::size_t>(e)].enabled)
        incoming.push_back(e);
    if (static_cast<int>(incoming.size()) <= 2) continue;
    std::vector<std::pair<double, int>> scored;
    for (int e : incoming) scored.emplace_back(removal_score(disable_edge(cur, e)), e);
    // removal hurting most = lowest removal score; stable on ties
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t i = 2; i < scored.size(); ++i)
      cur = disable_edge(cur, scored[i].second);
  }
  return cur;
}

}  // namespace zcpt
