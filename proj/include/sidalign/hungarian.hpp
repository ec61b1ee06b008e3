#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <vector>

namespace sidalign {

/// Optimal min-cost assignment on a square cost matrix together with the dual
/// potentials that certify it (cost(r,c) - row_potential[r] - col_potential[c] >= 0,
/// with equality on every matched pair).
template <typename Scalar>
struct AssignmentSolution {
  std::vector<Eigen::Index> row_to_col;
  std::vector<Scalar> row_potential;
  std::vector<Scalar> col_potential;
  Scalar total_cost{};
};

/// Shortest-augmenting-path Hungarian method, O(n^3). Exact for integer Scalar.
template <typename Scalar, typename Derived>
AssignmentSolution<Scalar> solve_min_cost_assignment(const Eigen::MatrixBase<Derived>& cost) {
  const Eigen::Index n = cost.rows();
  AssignmentSolution<Scalar> out;
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  out.row_potential.assign(static_cast<std::size_t>(n), Scalar{0});
  out.col_potential.assign(static_cast<std::size_t>(n), Scalar{0});
  if (n == 0) return out;

  const Scalar inf = std::numeric_limits<Scalar>::max() / 4;
  // 1-based working arrays; column 0 is the virtual source.
  std::vector<Scalar> u(static_cast<std::size_t>(n + 1), 0), v(static_cast<std::size_t>(n + 1), 0);
  std::vector<Eigen::Index> match_col(static_cast<std::size_t>(n + 1), 0);
  std::vector<Eigen::Index> way(static_cast<std::size_t>(n + 1), 0);
  std::vector<Scalar> min_slack(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));

  for (Eigen::Index row = 1; row <= n; ++row) {
    match_col[0] = row;
    Eigen::Index col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(col0)] = 1;
      const Eigen::Index r = match_col[static_cast<std::size_t>(col0)];
      Scalar delta = inf;
      Eigen::Index next_col = 0;
      for (Eigen::Index c = 1; c <= n; ++c) {
        if (used[static_cast<std::size_t>(c)]) continue;
        const Scalar slack = static_cast<Scalar>(cost(r - 1, c - 1)) - u[static_cast<std::size_t>(r)] -
                             v[static_cast<std::size_t>(c)];
        if (slack < min_slack[static_cast<std::size_t>(c)]) {
          min_slack[static_cast<std::size_t>(c)] = slack;
          way[static_cast<std::size_t>(c)] = col0;
        }
        if (min_slack[static_cast<std::size_t>(c)] < delta) {
          delta = min_slack[static_cast<std::size_t>(c)];
          next_col = c;
        }
      }
      for (Eigen::Index c = 0; c <= n; ++c) {
        if (used[static_cast<std::size_t>(c)]) {
          u[static_cast<std::size_t>(match_col[static_cast<std::size_t>(c)])] += delta;
          v[static_cast<std::size_t>(c)] -= delta;
        } else {
          min_slack[static_cast<std::size_t>(c)] -= delta;
        }
      }
      col0 = next_col;
    } while (match_col[static_cast<std::size_t>(col0)] != 0);
    do {
      const Eigen::Index prev = way[static_cast<std::size_t>(col0)];
      match_col[static_cast<std::size_t>(col0)] = match_col[static_cast<std::size_t>(prev)];
      col0 = prev;
    } while (col0 != 0);
  }

  for (Eigen::Index c = 1; c <= n; ++c) {
    const Eigen::Index r = match_col[static_cast<std::size_t>(c)];
    out.row_to_col[static_cast<std::size_t>(r - 1)] = c - 1;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row_potential[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i + 1)];
    out.col_potential[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i + 1)];
    out.total_cost += static_cast<Scalar>(cost(i, out.row_to_col[static_cast<std::size_t>(i)]));
  }
  return out;
}

/// Rewrites an optimal assignment into the lexicographically smallest optimal one
/// (row 0's column as small as possible, then row 1's, ...). Every optimal
/// assignment is a perfect matching of the tight-edge graph of any optimal dual,
/// so the search walks alternating cycles in that graph only. O(n * |tight edges|).
template <typename Scalar, typename Derived>
void canonicalize_assignment(const Eigen::MatrixBase<Derived>& cost, AssignmentSolution<Scalar>& sol) {
  const Eigen::Index n = cost.rows();
  const auto un = static_cast<std::size_t>(n);
  std::vector<std::vector<Eigen::Index>> tight(un);       // row -> columns, ascending
  std::vector<std::vector<Eigen::Index>> tight_rev(un);   // column -> rows
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const Scalar reduced = static_cast<Scalar>(cost(r, c)) - sol.row_potential[static_cast<std::size_t>(r)] -
                             sol.col_potential[static_cast<std::size_t>(c)];
      if (reduced == Scalar{0}) {
        tight[static_cast<std::size_t>(r)].push_back(c);
        tight_rev[static_cast<std::size_t>(c)].push_back(r);
      }
    }
  }
  std::vector<Eigen::Index>& row_to_col = sol.row_to_col;
  std::vector<Eigen::Index> col_to_row(un);
  for (Eigen::Index r = 0; r < n; ++r) col_to_row[static_cast<std::size_t>(row_to_col[static_cast<std::size_t>(r)])] = r;

  std::vector<char> good(un);
  std::vector<Eigen::Index> parent_col(un);  // for a good row: the good column it moves to
  std::vector<Eigen::Index> queue;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index current = row_to_col[static_cast<std::size_t>(r)];
    if (tight[static_cast<std::size_t>(r)].front() == current) continue;
    // Reverse search from the column r would release: a row x > r is "good" if it
    // can move to a good column, and a good row's own column becomes good.
    std::fill(good.begin(), good.end(), 0);
    queue.clear();
    for (Eigen::Index x : tight_rev[static_cast<std::size_t>(current)]) {
      if (x > r && !good[static_cast<std::size_t>(x)]) {
        good[static_cast<std::size_t>(x)] = 1;
        parent_col[static_cast<std::size_t>(x)] = current;
        queue.push_back(x);
      }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Eigen::Index x = queue[head];
      const Eigen::Index freed = row_to_col[static_cast<std::size_t>(x)];
      for (Eigen::Index y : tight_rev[static_cast<std::size_t>(freed)]) {
        if (y > r && !good[static_cast<std::size_t>(y)]) {
          good[static_cast<std::size_t>(y)] = 1;
          parent_col[static_cast<std::size_t>(y)] = freed;
          queue.push_back(y);
        }
      }
    }
    for (Eigen::Index c : tight[static_cast<std::size_t>(r)]) {
      if (c >= current) break;
      const Eigen::Index holder = col_to_row[static_cast<std::size_t>(c)];
      if (holder <= r || !good[static_cast<std::size_t>(holder)]) continue;
      // Rotate: r takes c, each row on the chain moves to its parent column.
      Eigen::Index x = holder;
      row_to_col[static_cast<std::size_t>(r)] = c;
      col_to_row[static_cast<std::size_t>(c)] = r;
      while (true) {
        const Eigen::Index target = parent_col[static_cast<std::size_t>(x)];
        row_to_col[static_cast<std::size_t>(x)] = target;
        const Eigen::Index displaced = col_to_row[static_cast<std::size_t>(target)];
        col_to_row[static_cast<std::size_t>(target)] = x;
        if (target == current) break;
        x = displaced;
      }
      break;
    }
  }
}

}  // namespace sidalign
