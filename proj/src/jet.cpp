#include "beamlab/jet.hpp"

#include <algorithm>
#include <tuple>

namespace beamlab {

const JetShape* JetShape::get(int nz, int pmax, int qmax) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, std::unique_ptr<JetShape>> cache;
  if (nz < 0 || nz > kMaxZ || pmax < 0 || qmax < 0) throw Error("input", "bad jet shape");
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(nz, pmax, qmax);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.get();
  auto s = std::make_unique<JetShape>();
  s->nz = nz;
  s->pmax = pmax;
  s->qmax = qmax;
  s->build();
  const JetShape* out = s.get();
  cache.emplace(key, std::move(s));
  return out;
}

void JetShape::build() {
  // enumerate z multi-indices by total degree, lexicographically descending
  std::vector<std::vector<std::array<int, kMaxZ + 1>>> zby(qmax + 1);
  std::array<int, kMaxZ + 1> e{};
  auto rec = [&](auto&& self, int v, int left, int total) -> void {
    if (v > nz) {
      zby[total].push_back(e);
      return;
    }
    for (int k = left; k >= 0; --k) {
      e[v] = k;
      self(self, v + 1, left - k, total + k);
    }
    e[v] = 0;
  };
  rec(rec, 1, qmax, 0);
  for (auto& lst : zby)
    std::sort(lst.begin(), lst.end(), [](const auto& a, const auto& b) {
      return std::lexicographical_compare(b.begin() + 1, b.end(), a.begin() + 1, a.end());
    });

  zbegin.assign(qmax + 2, 0);
  for (int q = 0; q <= qmax; ++q) {
    zbegin[q] = static_cast<int>(exps.size());
    for (int p = 0; p <= pmax; ++p)
      for (auto z : zby[q]) {
        z[0] = p;
        exps.push_back(z);
        zdeg.push_back(q);
        sdeg.push_back(p);
      }
  }
  zbegin[qmax + 1] = static_cast<int>(exps.size());
  size = static_cast<int>(exps.size());

  int keys = pmax + 1;
  for (int v = 1; v <= nz; ++v) keys *= (qmax + 1);
  lookup.assign(keys, -1);
  for (int i = 0; i < size; ++i) {
    int key = exps[i][0];
    for (int v = 1; v <= nz; ++v) key = key * (qmax + 1) + exps[i][v];
    lookup[key] = i;
  }

  mul.assign(size, {});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      if (sdeg[i] + sdeg[j] > pmax || zdeg[i] + zdeg[j] > qmax) continue;
      std::array<int, kMaxZ + 1> s{};
      for (int v = 0; v <= kMaxZ; ++v) s[v] = exps[i][v] + exps[j][v];
      mul[i].push_back({j, index(s)});
    }

  for (int v = 0; v <= nz; ++v)
    for (int i = 0; i < size; ++i) {
      if (exps[i][v] == 0) continue;
      auto s = exps[i];
      s[v] -= 1;
      deriv[v].push_back({i, index(s), exps[i][v]});
    }
}

} // namespace beamlab
