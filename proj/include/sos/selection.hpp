#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sos/core.hpp"
#include "sos/error.hpp"

namespace sos {

namespace detail {

// Other-objective L1 distance between two score vectors, excluding the
// target objective.
inline double other_objective_distance(const ScoreVector& a, const ScoreVector& b,
                                       const std::string& target,
                                       std::span<const ObjectiveSpec> objectives) {
    double dist = 0.0;
    for (const ObjectiveSpec& o : objectives) {
        if (o.name == target) continue;
        dist += std::fabs(a.score(o.name) - b.score(o.name));
    }
    return dist;
}

}  // namespace detail

// c is locally optimal for `target` iff it scores at least as high on
// `target` as every pool member whose other-objective L1 distance is
// strictly below delta. c always lies in its own neighborhood (distance 0).
inline bool is_locally_optimal(const PoolMember& c, const Pool& pool, const std::string& target,
                               std::span<const ObjectiveSpec> objectives, double delta) {
    double own = c.scores.score(target);
    for (const auto& [id, p] : pool.members) {
        if (p.scores.score(target) <= own) continue;  // cannot disqualify c
        if (detail::other_objective_distance(p.scores, c.scores, target, objectives) < delta) {
            return false;
        }
    }
    return true;
}

// Retains exactly the members locally optimal for at least one objective.
// Never empty for a non-empty pool: each objective's global maximum survives.
inline Pool local_optimal_selection(const Pool& pool, std::span<const ObjectiveSpec> objectives,
                                    double delta) {
    Pool out;
    out.generation_counter = pool.generation_counter;
    for (const auto& [id, member] : pool.members) {
        for (const ObjectiveSpec& o : objectives) {
            if (is_locally_optimal(member, pool, o.name, objectives, delta)) {
                out.insert(member);
                break;
            }
        }
    }
    return out;
}

// Literal transliteration of the local-optimality rule, quadratic and
// allocation-happy on purpose: materialize each member's neighborhood per
// objective, take the neighborhood maximum, compare. Test oracle for
// local_optimal_selection.
inline Pool brute_force_selection_oracle(const Pool& pool,
                                         std::span<const ObjectiveSpec> objectives,
                                         double delta) {
    std::vector<const PoolMember*> members;
    members.reserve(pool.size());
    for (const auto& [id, member] : pool.members) members.push_back(&member);

    Pool out;
    out.generation_counter = pool.generation_counter;
    for (const PoolMember* c : members) {
        bool keep = false;
        for (const ObjectiveSpec& target : objectives) {
            std::vector<const PoolMember*> neighborhood;
            for (const PoolMember* p : members) {
                double dist = detail::other_objective_distance(p->scores, c->scores, target.name,
                                                               objectives);
                if (dist < delta) neighborhood.push_back(p);
            }
            double best = -1.0;
            for (const PoolMember* p : neighborhood) {
                best = std::max(best, p->scores.score(target.name));
            }
            if (c->scores.score(target.name) >= best) keep = true;
        }
        if (keep) out.insert(*c);
    }
    return out;
}

}  // namespace sos
