#include "srot/network_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "srot/error.hpp"

namespace srot::detail {

namespace {

struct BasicArc {
    int row;
    int col;
    double flow;
};

}  // namespace

SimplexResult transport_simplex(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                const Eigen::MatrixXd& cost, long max_pivots) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    if (n < 1 || m < 1 || cost.rows() != n || cost.cols() != m) {
        throw SolverFailure("transport_simplex: dimension mismatch");
    }
    const int num_nodes = n + m;  // rows 0..n-1, columns n..n+m-1
    const long num_arcs = static_cast<long>(n) * m;
    if (max_pivots < 0) max_pivots = 1000 + 200L * num_nodes + num_arcs;

    const double cost_scale = 1.0 + cost.cwiseAbs().maxCoeff();
    const double opt_tol = 1e-10 * cost_scale;

    // Northwest-corner start: walks a staircase from (0,0) to (n-1,m-1),
    // yielding exactly n+m-1 basic cells (some possibly degenerate at 0).
    std::vector<BasicArc> basis;
    basis.reserve(num_nodes);
    {
        int i = 0, j = 0;
        double ra = a(0), rb = b(0);
        for (;;) {
            basis.push_back({i, j, std::max(std::min(ra, rb), 0.0)});
            if (i == n - 1 && j == m - 1) break;
            bool advance_row = ra <= rb;
            if (advance_row && i == n - 1) advance_row = false;
            if (!advance_row && j == m - 1) advance_row = true;
            if (advance_row) {
                rb = std::max(rb - ra, 0.0);
                ++i;
                ra = a(i);
            } else {
                ra = std::max(ra - rb, 0.0);
                ++j;
                rb = b(j);
            }
        }
    }

    // Spanning-tree bookkeeping, rebuilt after every pivot (O(n+m), cheap
    // next to the entering-arc scan).
    std::vector<std::vector<int>> adj(num_nodes);
    std::vector<int> parent(num_nodes), pred(num_nodes), depth(num_nodes);
    std::vector<int> bfs_queue(num_nodes);
    std::vector<double> pot(num_nodes);

    auto rebuild_tree = [&]() {
        for (auto& lst : adj) lst.clear();
        for (int k = 0; k < static_cast<int>(basis.size()); ++k) {
            adj[basis[k].row].push_back(k);
            adj[n + basis[k].col].push_back(k);
        }
        std::fill(parent.begin(), parent.end(), -2);
        parent[0] = -1;
        pred[0] = -1;
        depth[0] = 0;
        pot[0] = 0.0;
        int head = 0, tail = 0;
        bfs_queue[tail++] = 0;
        while (head < tail) {
            const int u = bfs_queue[head++];
            for (int k : adj[u]) {
                const int other = (u < n) ? n + basis[k].col : basis[k].row;
                if (parent[other] != -2) continue;
                parent[other] = u;
                pred[other] = k;
                depth[other] = depth[u] + 1;
                // Basic arcs satisfy cost(i,j) = u_i + v_j.
                pot[other] = cost(basis[k].row, basis[k].col) - pot[u];
                bfs_queue[tail++] = other;
            }
        }
        if (tail != num_nodes) throw SolverFailure("transport_simplex: basis tree disconnected");
    };
    rebuild_tree();

    const long block = std::max<long>(64, static_cast<long>(std::sqrt(static_cast<double>(num_arcs))));
    long next_start = 0;

    auto find_entering_block = [&]() -> long {
        double best = -opt_tol;
        long best_arc = -1;
        long in_block = 0;
        for (long s = 0; s < num_arcs; ++s) {
            long e = next_start + s;
            if (e >= num_arcs) e -= num_arcs;
            const int i = static_cast<int>(e / m);
            const int j = static_cast<int>(e % m);
            const double rc = cost(i, j) - pot[i] - pot[n + j];
            if (rc < best) {
                best = rc;
                best_arc = e;
            }
            if (++in_block == block) {
                if (best_arc >= 0) {
                    next_start = (e + 1 == num_arcs) ? 0 : e + 1;
                    return best_arc;
                }
                in_block = 0;
            }
        }
        if (best_arc >= 0) next_start = (best_arc + 1 == num_arcs) ? 0 : best_arc + 1;
        return best_arc;
    };

    auto find_entering_bland = [&]() -> long {
        for (long e = 0; e < num_arcs; ++e) {
            const int i = static_cast<int>(e / m);
            const int j = static_cast<int>(e % m);
            if (cost(i, j) - pot[i] - pot[n + j] < -opt_tol) return e;
        }
        return -1;
    };

    std::vector<int> up_arcs, down_arcs;
    up_arcs.reserve(num_nodes);
    down_arcs.reserve(num_nodes);

    int pivots = 0;
    long degen_streak = 0;
    const long degen_limit = 2L * num_nodes + 64;
    bool bland = false;

    while (true) {
        if (pivots >= max_pivots) throw SolverFailure("transport_simplex: pivot limit exceeded");
        const long e = bland ? find_entering_bland() : find_entering_block();
        if (e < 0) break;
        const int ei = static_cast<int>(e / m);
        const int ej = static_cast<int>(e % m);

        // Cycle = entering arc plus the tree path between its endpoints.
        // Walking up from either endpoint, cells alternate -,+,-,... (each
        // consecutive pair shares a row or column with the previous cell).
        up_arcs.clear();
        down_arcs.clear();
        int x = ei, y = n + ej;
        while (depth[x] > depth[y]) {
            up_arcs.push_back(pred[x]);
            x = parent[x];
        }
        while (depth[y] > depth[x]) {
            down_arcs.push_back(pred[y]);
            y = parent[y];
        }
        while (x != y) {
            up_arcs.push_back(pred[x]);
            x = parent[x];
            down_arcs.push_back(pred[y]);
            y = parent[y];
        }

        double delta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        auto consider = [&](const std::vector<int>& arcs) {
            for (std::size_t p = 0; p < arcs.size(); p += 2) {  // minus-cells sit at even positions
                const BasicArc& arc = basis[arcs[p]];
                const double f = arc.flow;
                const long id = static_cast<long>(arc.row) * m + arc.col;
                const long lid = leaving >= 0
                                     ? static_cast<long>(basis[leaving].row) * m + basis[leaving].col
                                     : -1;
                if (f < delta || (bland && f == delta && leaving >= 0 && id < lid)) {
                    delta = f;
                    leaving = arcs[p];
                }
            }
        };
        consider(up_arcs);
        consider(down_arcs);
        if (leaving < 0) throw SolverFailure("transport_simplex: no leaving arc (unbounded?)");

        for (std::size_t p = 0; p < up_arcs.size(); ++p) {
            basis[up_arcs[p]].flow += (p % 2 == 0) ? -delta : delta;
        }
        for (std::size_t p = 0; p < down_arcs.size(); ++p) {
            basis[down_arcs[p]].flow += (p % 2 == 0) ? -delta : delta;
        }
        basis[leaving] = {ei, ej, delta};
        for (auto& arc : basis) arc.flow = std::max(arc.flow, 0.0);
        rebuild_tree();

        ++pivots;
        if (delta <= 0.0) {
            if (++degen_streak > degen_limit) bland = true;  // Bland escapes degenerate cycling
        } else {
            degen_streak = 0;
            bland = false;
        }
    }

    SimplexResult res;
    res.coupling = Eigen::MatrixXd::Zero(n, m);
    for (const auto& arc : basis) {
        if (arc.flow > 0.0) res.coupling(arc.row, arc.col) = arc.flow;
    }
    res.dual_row = Eigen::VectorXd(n);
    res.dual_col = Eigen::VectorXd(m);
    for (int i = 0; i < n; ++i) res.dual_row(i) = pot[i];
    for (int j = 0; j < m; ++j) res.dual_col(j) = pot[n + j];
    res.pivots = pivots;
    res.optimal = true;
    return res;
}

}  // namespace srot::detail
