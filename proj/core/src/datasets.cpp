#include "idm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace idm::data {

std::vector<Transition> build_test_set(const grid::Grid& g,
                                       const grid::ExpertPolicy& e) {
  std::vector<Transition> out;
  for (grid::PosState s : grid::feasible_states(g, e)) {
    grid::Action a = e.act(g, s);
    out.push_back(labeled(s, static_cast<int>(a), grid::step(g, s, a)));
  }
  return out;
}

std::vector<Transition> build_goal_test_set(
    const grid::Grid& g, const std::vector<grid::PosState>& goals) {
  std::vector<Transition> out;
  for (grid::PosState goal : goals) {
    grid::Grid gg = g;
    gg.goal = goal;
    grid::ExpertPolicy e = grid::solve_expert(gg);
    for (grid::PosState s : grid::feasible_states(gg, e)) {
      grid::Action a = e.act(gg, s);
      out.push_back(labeled(s, static_cast<int>(a), grid::step(gg, s, a), goal));
    }
  }
  return out;
}

DatasetSplit sample_train_split(const std::vector<Transition>& full,
                                double fraction, uint64_t seed) {
  if (full.empty()) throw ParameterError("empty dataset");
  if (fraction <= 0.0 || fraction > 1.0)
    throw ParameterError("fraction must be in (0,1]");
  const size_t n = full.size();
  const size_t k = std::min(
      n, static_cast<size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  DatasetSplit split;
  split.split_fraction = fraction;
  split.seed = seed;
  std::vector<size_t> chosen(idx.begin(), idx.begin() + k);
  std::sort(chosen.begin(), chosen.end());  // stable order in the split
  for (size_t i : chosen) split.labeled.push_back(full[i]);
  for (const Transition& t : full) split.unlabeled.push_back(strip_action(t));
  return split;
}

std::vector<Transition> idm_relabel(const std::vector<Transition>& unlabeled,
                                    const IdmFn& idm, RelabelMode mode,
                                    std::mt19937_64& rng) {
  std::vector<Transition> out;
  out.reserve(unlabeled.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const Transition& t : unlabeled) {
    auto d = idm(t);
    int a = 0;
    if (mode == RelabelMode::Argmax) {
      for (int k = 1; k < 4; ++k)
        if (d[k] > d[a]) a = k;
    } else {
      double r = u(rng), acc = 0.0;
      a = 3;
      for (int k = 0; k < 4; ++k) {
        acc += d[k];
        if (r < acc) {
          a = k;
          break;
        }
      }
    }
    Transition lt = t;
    lt.a = a;
    out.push_back(lt);
  }
  return out;
}

void save_dataset(std::ostream& os, const std::vector<Transition>& ts,
                  const std::string& format, const std::string& provenance) {
  os << "idm-dataset v1 format=" << format << " provenance=" << provenance
     << " n=" << ts.size() << "\n";
  for (const Transition& t : ts) {
    os << t.s.x << "," << t.s.y << " ";
    if (t.a)
      os << *t.a;
    else
      os << "-";
    os << " " << t.s_next.x << "," << t.s_next.y;
    if (t.goal) os << " " << t.goal->x << "," << t.goal->y;
    os << "\n";
  }
}

std::vector<Transition> load_dataset(std::istream& is, std::string* format,
                                     std::string* provenance) {
  std::string header;
  std::getline(is, header);
  if (header.rfind("idm-dataset v1 ", 0) != 0)
    throw ParameterError("bad dataset header");
  auto field = [&](const std::string& key) {
    auto pos = header.find(key + "=");
    if (pos == std::string::npos) throw ParameterError("missing " + key);
    pos += key.size() + 1;
    auto end = header.find(' ', pos);
    return header.substr(pos, end == std::string::npos ? end : end - pos);
  };
  if (format) *format = field("format");
  if (provenance) *provenance = field("provenance");
  const size_t n = std::stoul(field("n"));
  std::vector<Transition> out;
  auto parse_pos = [](const std::string& tok) {
    auto comma = tok.find(',');
    if (comma == std::string::npos) throw ParameterError("bad position token");
    return grid::PosState{std::stoi(tok.substr(0, comma)),
                          std::stoi(tok.substr(comma + 1))};
  };
  for (size_t i = 0; i < n; ++i) {
    std::string line;
    if (!std::getline(is, line)) throw ParameterError("truncated dataset");
    std::istringstream ls(line);
    std::string stok, atok, ntok, gtok;
    ls >> stok >> atok >> ntok;
    Transition t;
    t.s = parse_pos(stok);
    if (atok != "-") t.a = std::stoi(atok);
    t.s_next = parse_pos(ntok);
    if (ls >> gtok) t.goal = parse_pos(gtok);
    out.push_back(t);
  }
  return out;
}

}  // namespace idm::data
