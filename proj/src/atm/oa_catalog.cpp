// Construction set for orthogonal arrays.
//
// Families:
//  * Rao-Hamming arrays OA(q^k, q^((q^k-1)/(q-1))) over GF(q); k = 2 gives the
//    Bose arrays OA(q^2, q^(q+1)).
//  * Two-level Hadamard (Plackett-Burman) arrays from Paley I/II and Sylvester
//    doubling for run sizes that are not powers of two.
//  * Four-level columns carved out of 2^k regular designs via partial line
//    spreads of PG(k-1, 2), with leftover points kept as two-level columns.
//  * Difference-scheme expansions D(M, m, s) (+) OA(N, s^k), with the row index
//    of the scheme re-expressed as a small array of its own (this is how the
//    L18, L36, 48-, 50- and 54-run mixed arrays are formed).

#include <algorithm>
#include <array>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <random>
#include <string_view>

#include "atm/error.hpp"
#include "atm/oa.hpp"

namespace atm {

namespace {

// Difference schemes, 0-based entries, one row per line. Group operations:
// d6_3, d12_3 over Z3; d10_5 over Z5; d12_4 over GF(4) addition (bitwise xor).
constexpr std::string_view kD6x6Z3 = R"(
0 0 0 0 0 0
0 0 2 1 1 2
0 1 2 2 0 1
0 1 1 0 2 2
0 2 0 1 2 1
0 2 1 2 1 0
)";

constexpr std::string_view kD12x12Z3 = R"(
0 0 0 0 0 0 0 0 0 0 0 0
0 0 0 2 1 1 0 2 2 1 1 2
0 0 1 0 2 0 2 2 1 2 1 1
0 0 2 0 1 2 1 1 1 0 2 2
0 1 1 2 0 0 1 1 2 2 0 2
0 1 0 2 2 1 2 1 0 0 2 1
0 1 2 1 1 2 0 2 0 2 0 1
0 1 2 2 0 2 2 0 1 1 1 0
0 2 1 1 2 2 0 1 2 0 1 0
0 2 1 1 1 0 2 0 0 1 2 2
0 2 0 1 0 1 1 2 1 2 2 0
0 2 2 0 2 1 1 0 2 1 0 1
)";

constexpr std::string_view kD12x12GF4 = R"(
0 0 0 0 0 0 0 0 0 0 0 0
0 0 3 1 1 3 3 1 2 2 0 2
0 0 1 3 2 1 2 0 3 2 3 1
0 1 2 1 3 0 1 2 3 0 3 2
0 1 3 3 1 2 0 2 0 3 2 1
0 1 1 2 2 2 3 3 1 0 0 3
0 2 0 2 1 3 1 0 3 1 2 3
0 2 3 0 3 2 2 1 1 1 3 0
0 2 2 3 0 0 3 3 2 1 1 1
0 3 1 0 2 3 1 2 2 3 1 0
0 3 0 1 0 1 2 3 1 3 2 2
0 3 2 2 3 1 0 1 0 2 1 3
)";

constexpr std::string_view kD10x10Z5 = R"(
0 0 0 0 0 0 0 0 0 0
0 0 2 3 2 1 1 4 4 3
0 1 3 0 1 4 3 4 2 2
0 1 0 2 4 2 4 3 1 3
0 2 3 4 4 1 0 2 3 1
0 2 1 1 3 4 2 3 4 0
0 3 1 4 2 3 4 1 0 2
0 3 4 3 1 0 2 2 1 4
0 4 4 2 3 3 1 0 2 1
0 4 2 1 0 2 3 1 3 4
)";

// 0-based working matrix used while building arrays.
struct Table {
  std::vector<int> levels;             // per column
  std::vector<std::vector<int>> rows;  // 0-based entries

  std::size_t runs() const { return rows.size(); }
  std::size_t cols() const { return levels.size(); }

  void add_column(int s, const std::vector<int>& col) {
    if (rows.empty()) rows.resize(col.size());
    levels.push_back(s);
    for (std::size_t i = 0; i < col.size(); ++i) rows[i].push_back(col[i]);
  }
  std::vector<int> column(std::size_t c) const {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i][c];
    return out;
  }
};

CatalogArray finish(std::string name, const Table& t) {
  CatalogArray a;
  a.name = std::move(name);
  a.column_levels = t.levels;
  for (const auto& r : t.rows)
    for (int v : r) a.cells.push_back(v + 1);
  return a;
}

// Arithmetic in GF(q) for q in {2,3,4,5,7,8,9}; elements are encoded as the
// base-p digits of their polynomial representation.
class GaloisField {
 public:
  explicit GaloisField(int q) : q_(q) {
    std::vector<int> reduce;  // x^m expressed in lower powers
    switch (q) {
      case 2: case 3: case 5: case 7: p_ = q; m_ = 1; break;
      case 4: p_ = 2; m_ = 2; reduce = {1, 1}; break;     // x^2 = x + 1
      case 8: p_ = 2; m_ = 3; reduce = {1, 1, 0}; break;  // x^3 = x + 1
      case 9: p_ = 3; m_ = 2; reduce = {2, 0}; break;     // x^2 = -1
      default: fail(Errc::unsupported_profile, "no field of order " + std::to_string(q));
    }
    add_.resize(static_cast<std::size_t>(q * q));
    mul_.resize(static_cast<std::size_t>(q * q));
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        auto da = digits(a), db = digits(b);
        std::vector<int> s(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i) s[i] = (da[i] + db[i]) % p_;
        add_[a * q + b] = encode(s);
        std::vector<int> prod(static_cast<std::size_t>(2 * m_), 0);
        for (int i = 0; i < m_; ++i)
          for (int j = 0; j < m_; ++j) prod[i + j] = (prod[i + j] + da[i] * db[j]) % p_;
        for (int d = 2 * m_ - 1; d >= m_; --d) {
          const int c = prod[d];
          if (!c) continue;
          prod[d] = 0;
          for (int i = 0; i < m_; ++i) prod[d - m_ + i] = (prod[d - m_ + i] + c * reduce[i]) % p_;
        }
        prod.resize(static_cast<std::size_t>(m_));
        mul_[a * q + b] = encode(prod);
      }
  }

  int order() const { return q_; }
  int add(int a, int b) const { return add_[a * q_ + b]; }
  int mul(int a, int b) const { return mul_[a * q_ + b]; }

 private:
  std::vector<int> digits(int a) const {
    std::vector<int> d(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i, a /= p_) d[i] = a % p_;
    return d;
  }
  int encode(const std::vector<int>& d) const {
    int a = 0;
    for (int i = m_; i-- > 0;) a = a * p_ + d[i];
    return a;
  }

  int q_ = 0, p_ = 0, m_ = 0;
  std::vector<int> add_, mul_;
};

// All vectors of GF(q)^k in lexicographic order.
std::vector<std::vector<int>> all_vectors(int q, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> v(static_cast<std::size_t>(k), 0);
  while (true) {
    out.push_back(v);
    int i = k - 1;
    while (i >= 0 && v[i] == q - 1) v[i--] = 0;
    if (i < 0) break;
    ++v[i];
  }
  return out;
}

Table rao_hamming(int q, int k) {
  GaloisField f(q);
  const auto rows = all_vectors(q, k);
  // Projective points: first nonzero coordinate equal to 1. Unit vectors first
  // so the leading k columns form a full factorial.
  std::vector<std::vector<int>> points;
  for (int i = 0; i < k; ++i) {
    std::vector<int> e(static_cast<std::size_t>(k), 0);
    e[i] = 1;
    points.push_back(e);
  }
  for (const auto& v : rows) {
    auto nz = std::find_if(v.begin(), v.end(), [](int c) { return c != 0; });
    if (nz == v.end() || *nz != 1) continue;
    if (std::count(v.begin(), v.end(), 0) == k - 1) continue;  // unit vector, already added
    points.push_back(v);
  }
  Table t;
  for (const auto& c : points) {
    std::vector<int> col(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      int s = 0;
      for (int i = 0; i < k; ++i) s = f.add(s, f.mul(rows[r][i], c[i]));
      col[r] = s;
    }
    t.add_column(q, col);
  }
  return t;
}

// +-1 matrices.
using SignMatrix = std::vector<std::vector<int>>;

int legendre(int a, int q) {
  a = ((a % q) + q) % q;
  if (a == 0) return 0;
  for (int x = 1; x < q; ++x)
    if ((x * x) % q == a) return 1;
  return -1;
}

SignMatrix paley1(int q) {  // prime q = 3 mod 4, order q + 1
  const int n = q + 1;
  SignMatrix h(n, std::vector<int>(n, 0));
  for (int j = 1; j < n; ++j) {
    h[0][j] = 1;
    h[j][0] = -1;
  }
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) h[i][j] = legendre(j - i, q);
  for (int i = 0; i < n; ++i) h[i][i] += 1;
  return h;
}

SignMatrix paley2(int q) {  // prime q = 1 mod 4, order 2(q + 1)
  const int n = q + 1;
  std::vector<std::vector<int>> c(n, std::vector<int>(n, 0));
  for (int j = 1; j < n; ++j) c[0][j] = c[j][0] = 1;
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) c[i][j] = legendre(j - i, q);
  SignMatrix h(2 * n, std::vector<int>(2 * n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        h[2 * i][2 * j] = 1;
        h[2 * i][2 * j + 1] = -1;
        h[2 * i + 1][2 * j] = -1;
        h[2 * i + 1][2 * j + 1] = -1;
      } else {
        const int v = c[i][j];
        h[2 * i][2 * j] = v;
        h[2 * i][2 * j + 1] = v;
        h[2 * i + 1][2 * j] = v;
        h[2 * i + 1][2 * j + 1] = -v;
      }
    }
  return h;
}

SignMatrix sylvester_double(const SignMatrix& h) {
  const std::size_t n = h.size();
  SignMatrix out(2 * n, std::vector<int>(2 * n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      out[i][j] = out[i][j + n] = out[i + n][j] = h[i][j];
      out[i + n][j + n] = -h[i][j];
    }
  return out;
}

// Normalizes the first column to +1 and drops it: OA(N, 2^(N-1)).
Table hadamard_array(SignMatrix h) {
  const std::size_t n = h.size();
  for (auto& row : h)
    if (row[0] < 0)
      for (auto& v : row) v = -v;
  Table t;
  for (std::size_t j = 1; j < n; ++j) {
    std::vector<int> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = h[i][j] > 0 ? 0 : 1;
    t.add_column(2, col);
  }
  return t;
}

std::vector<std::array<unsigned, 3>> partial_spread(int k) {
  const unsigned total = (1u << k) - 1;
  const std::size_t target = (k % 2 == 0) ? total / 3 : (total - 4) / 3;
  std::vector<std::array<unsigned, 3>> lines;
  for (unsigned a = 1; a <= total; ++a)
    for (unsigned b = a + 1; b <= total; ++b)
      if ((a ^ b) > b) lines.push_back({a, b, a ^ b});
  std::vector<std::array<unsigned, 3>> best;
  for (std::uint64_t seed = 1; seed <= 500 && best.size() < target; ++seed) {
    auto order = lines;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> used(total + 1, false);
    std::vector<std::array<unsigned, 3>> chosen;
    for (const auto& ln : order) {
      if (used[ln[0]] || used[ln[1]] || used[ln[2]]) continue;
      used[ln[0]] = used[ln[1]] = used[ln[2]] = true;
      chosen.push_back(ln);
    }
    if (chosen.size() > best.size()) best = std::move(chosen);
  }
  std::sort(best.begin(), best.end());
  return best;
}

int dot2(unsigned u, unsigned c) { return __builtin_popcount(u & c) & 1; }

// 2^k runs with as many four-level columns as a partial spread allows, then
// the leftover points as two-level columns.
Table four_level_from_spread(int k) {
  const unsigned total = (1u << k) - 1;
  const auto spread = partial_spread(k);
  std::vector<bool> covered(total + 1, false);
  Table t;
  const unsigned n = 1u << k;
  for (const auto& ln : spread) {
    std::vector<int> col(n);
    for (unsigned u = 0; u < n; ++u) col[u] = 2 * dot2(u, ln[0]) + dot2(u, ln[1]);
    t.add_column(4, col);
    covered[ln[0]] = covered[ln[1]] = covered[ln[2]] = true;
  }
  for (unsigned c = 1; c <= total; ++c) {
    if (covered[c]) continue;
    std::vector<int> col(n);
    for (unsigned u = 0; u < n; ++u) col[u] = dot2(u, c);
    t.add_column(2, col);
  }
  return t;
}

std::vector<std::vector<int>> parse_table(std::string_view text) { return parse_array_text(text); }

enum class Group { cyclic, xor4 };

int group_add(Group g, int s, int a, int b) { return g == Group::xor4 ? (a ^ b) : (a + b) % s; }

// How the M row indices of a difference scheme are expressed as columns.
enum class IndexSplit { none, single, two_by_rest, hadamard, rest_by_two };

// D(M, m, s) (+) A where A is an OA(N, s^k); rows ordered (i, r).
Table difference_expansion(std::string_view scheme, int s, Group g, const Table& base, IndexSplit split) {
  const auto d = parse_table(scheme);
  const std::size_t m_rows = d.size();
  const std::size_t m_cols = d.front().size();
  const std::size_t n = base.runs();
  Table t;
  const std::size_t total = m_rows * n;
  const int M = static_cast<int>(m_rows);
  auto index_col = [&](auto fn, int levels) {
    std::vector<int> col(total);
    for (std::size_t i = 0; i < m_rows; ++i)
      for (std::size_t r = 0; r < n; ++r) col[i * n + r] = fn(static_cast<int>(i));
    t.add_column(levels, col);
  };
  switch (split) {
    case IndexSplit::none: break;
    case IndexSplit::single: index_col([](int i) { return i; }, M); break;
    case IndexSplit::two_by_rest:
      index_col([&](int i) { return i / (M / 2); }, 2);
      index_col([&](int i) { return i % (M / 2); }, M / 2);
      break;
    case IndexSplit::rest_by_two:
      index_col([&](int i) { return i / (M / 3); }, 3);
      index_col([&](int i) { return i % (M / 3); }, M / 3);
      break;
    case IndexSplit::hadamard: {
      auto h = hadamard_array(paley1(M - 1));
      for (std::size_t c = 0; c < h.cols(); ++c) {
        auto hc = h.column(c);
        index_col([&](int i) { return hc[static_cast<std::size_t>(i)]; }, 2);
      }
      break;
    }
  }
  for (std::size_t v = 0; v < m_cols; ++v)
    for (std::size_t u = 0; u < base.cols(); ++u) {
      std::vector<int> col(total);
      for (std::size_t i = 0; i < m_rows; ++i)
        for (std::size_t r = 0; r < n; ++r) col[i * n + r] = group_add(g, s, d[i][v], base.rows[r][u]);
      t.add_column(s, col);
    }
  return t;
}

Table cyclic_base(int s) {
  Table t;
  std::vector<int> col(static_cast<std::size_t>(s));
  std::iota(col.begin(), col.end(), 0);
  t.add_column(s, col);
  return t;
}

std::vector<CatalogArray> build_catalog() {
  std::vector<CatalogArray> out;
  auto name_rh = [](int q, int k) {
    return "RH(" + std::to_string(q) + "^" + std::to_string(k) + ")";
  };
  for (int k = 2; k <= 7; ++k) out.push_back(finish(name_rh(2, k), rao_hamming(2, k)));
  for (int k = 2; k <= 4; ++k) out.push_back(finish(name_rh(3, k), rao_hamming(3, k)));
  for (int k = 2; k <= 3; ++k) out.push_back(finish(name_rh(4, k), rao_hamming(4, k)));
  for (int k = 2; k <= 3; ++k) out.push_back(finish(name_rh(5, k), rao_hamming(5, k)));
  out.push_back(finish(name_rh(7, 2), rao_hamming(7, 2)));
  out.push_back(finish(name_rh(8, 2), rao_hamming(8, 2)));
  out.push_back(finish(name_rh(9, 2), rao_hamming(9, 2)));

  for (int k = 4; k <= 7; ++k) out.push_back(finish("Spread4(2^" + std::to_string(k) + ")", four_level_from_spread(k)));

  auto pb = [&](int n, SignMatrix h) { out.push_back(finish("PB" + std::to_string(n), hadamard_array(std::move(h)))); };
  pb(12, paley1(11));
  pb(20, paley1(19));
  pb(24, paley1(23));
  pb(28, paley2(13));
  pb(36, paley2(17));
  pb(40, sylvester_double(paley1(19)));
  pb(44, paley1(43));
  pb(48, paley1(47));
  pb(56, sylvester_double(paley2(13)));
  pb(60, paley1(59));

  const auto z3 = cyclic_base(3);
  const auto z5 = cyclic_base(5);
  Table gf4;
  {
    std::vector<int> col{0, 1, 2, 3};
    gf4.add_column(4, col);
  }
  const auto oa9 = rao_hamming(3, 2);
  out.push_back(finish("L18", difference_expansion(kD6x6Z3, 3, Group::cyclic, z3, IndexSplit::two_by_rest)));
  out.push_back(finish("OA18(6.3^6)", difference_expansion(kD6x6Z3, 3, Group::cyclic, z3, IndexSplit::single)));
  out.push_back(finish("L36", difference_expansion(kD12x12Z3, 3, Group::cyclic, z3, IndexSplit::hadamard)));
  out.push_back(finish("OA36(4.3^13)", difference_expansion(kD12x12Z3, 3, Group::cyclic, z3, IndexSplit::rest_by_two)));
  out.push_back(finish("OA36(2.6.3^12)", difference_expansion(kD12x12Z3, 3, Group::cyclic, z3, IndexSplit::two_by_rest)));
  out.push_back(finish("OA48(2^11.4^12)", difference_expansion(kD12x12GF4, 4, Group::xor4, gf4, IndexSplit::hadamard)));
  out.push_back(finish("OA48(3.4^13)", difference_expansion(kD12x12GF4, 4, Group::xor4, gf4, IndexSplit::rest_by_two)));
  out.push_back(finish("L50", difference_expansion(kD10x10Z5, 5, Group::cyclic, z5, IndexSplit::two_by_rest)));
  out.push_back(finish("OA54(2.3^25)", difference_expansion(kD6x6Z3, 3, Group::cyclic, oa9, IndexSplit::two_by_rest)));

  std::stable_sort(out.begin(), out.end(), [](const CatalogArray& a, const CatalogArray& b) { return a.runs() < b.runs(); });
  return out;
}

}  // namespace

Design CatalogArray::design() const { return Design(column_levels.size(), cells, Provenance::catalog_oa); }

const std::vector<CatalogArray>& oa_catalog() {
  static const std::vector<CatalogArray> catalog = build_catalog();
  return catalog;
}

}  // namespace atm
