#include <algorithm>
#include <numeric>

#include "fcgs/context.hpp"
#include "fcgs/rng.hpp"

namespace fcgs {

BatchAssignment split_batches(std::size_t n, std::uint64_t seed, const std::array<Ratio, 4>& ratios) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "split_batches needs at least one Gaussian");
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Xoshiro256 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(perm[i], perm[j]);
  }

  BatchAssignment a;
  a.ratios = ratios;
  a.seed = seed;
  a.batch_of.resize(n);
  a.members.resize(ratios.size());
  std::size_t start = 0;
  for (std::size_t b = 0; b < ratios.size(); ++b) {
    const std::size_t len = b + 1 == ratios.size()
                                ? n - start
                                : static_cast<std::size_t>(static_cast<unsigned __int128>(n) * ratios[b].num /
                                                           ratios[b].den);
    auto& m = a.members[b];
    m.assign(perm.begin() + start, perm.begin() + start + len);
    std::sort(m.begin(), m.end());
    for (auto i : m) a.batch_of[i] = static_cast<std::uint8_t>(b);
    start += len;
  }
  return a;
}

}  // namespace fcgs
