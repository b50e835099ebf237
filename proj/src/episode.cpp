#include "fslpn/episode.hpp"

#include <algorithm>

#include "fslpn/rng.hpp"

namespace fslpn {

Episode sample_episode(const Dataset& ds, int ways, int shots, int queries, std::uint64_t seed) {
    if (ways < 2) throw_contract("sample_episode: need at least 2 ways");
    if (shots < 1 || queries < 1) throw_contract("sample_episode: shots and queries must be >= 1");

    const auto by_class = ds.class_index();
    std::vector<int> eligible;
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (!by_class[c].empty()) eligible.push_back(static_cast<int>(c));
    if (eligible.size() < static_cast<std::size_t>(ways))
        throw_data("sample_episode: dataset has " + std::to_string(eligible.size()) +
                   " classes, task needs " + std::to_string(ways));

    Rng rng(seed);
    const auto picked = rng.sample_without_replacement(eligible.size(), static_cast<std::size_t>(ways));

    Episode ep;
    const std::size_t need = static_cast<std::size_t>(shots) + static_cast<std::size_t>(queries);
    for (std::size_t p : picked) {
        const int cls = eligible[p];
        const auto& pool = by_class[static_cast<std::size_t>(cls)];
        if (pool.size() < need)
            throw_data("sample_episode: class " + std::to_string(cls) + " has " +
                       std::to_string(pool.size()) + " samples, task needs " + std::to_string(need));
        ep.classes.push_back(cls);
        const auto chosen = rng.sample_without_replacement(pool.size(), need);
        for (int s = 0; s < shots; ++s) {
            ep.support_rows.push_back(pool[chosen[static_cast<std::size_t>(s)]]);
            ep.support_labels.push_back(cls);
        }
        for (int q = 0; q < queries; ++q) {
            ep.query_rows.push_back(pool[chosen[static_cast<std::size_t>(shots) + q]]);
            ep.query_labels.push_back(cls);
        }
    }
    std::sort(ep.classes.begin(), ep.classes.end());
    return ep;
}

}  // namespace fslpn
