#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace meter {

enum class Role { developer, labeler, admin };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct Principal {
    std::string name;
    Role role = Role::developer;
    std::string token;
};

using Label = std::int64_t;
using LabeledItems = std::vector<std::pair<std::string, Label>>;  // sorted by id

struct LabeledDataset {
    std::string id;
    LabeledItems items;
    bool sealed = false;
    Role owner_role = Role::developer;
    std::string owner;
    std::int64_t created_at = 0;  // unix milliseconds
    bool released = false;        // a sealed set unsealed by test-set rotation

    std::size_t size() const noexcept { return items.size(); }
    bool readable_by(Role role) const { return role != Role::developer || !sealed; }
};

/// What a principal is allowed to see of a dataset. `labels` is empty when
/// the caller may only see ids.
struct DatasetView {
    std::string id;
    bool sealed = false;
    bool released = false;
    Role owner_role = Role::developer;
    std::int64_t created_at = 0;
    std::vector<std::string> ids;
    std::optional<std::vector<Label>> labels;
};

class Engine;
class Workspace;

/// Datasets plus the principals allowed to touch them. Sealed labels only
/// leave through `labels()`, which needs a trusted key.
class Registry {
public:
    class TrustedKey {
        friend class Engine;
        friend class Workspace;
        TrustedKey() = default;
    };

    void add_principal(Principal principal);
    const Principal& authenticate(std::string_view token) const;
    std::optional<Principal> find_principal(std::string_view name) const;

    /// Sorts, validates and stores `items`. Returns the dataset id (generated
    /// when `id` is empty).
    std::string register_dataset(const Principal& who, LabeledItems items, bool sealed, std::string id = {},
                                 std::int64_t now = 0);

    DatasetView read_labels(const Principal& who, std::string_view id) const;

    /// Metadata only (size, sealed flag) for any authenticated caller.
    DatasetView describe(std::string_view id) const;

    bool contains(std::string_view id) const;
    std::vector<std::string> dataset_ids() const;

    std::shared_ptr<const LabeledDataset> labels(TrustedKey, std::string_view id) const;
    void release(TrustedKey, std::string_view id);
    void restore(TrustedKey, LabeledDataset dataset);

    /// Called after every successful registration; used to append the event log.
    void on_register(std::function<void(const LabeledDataset&)> hook);

private:
    std::shared_ptr<const LabeledDataset> find(std::string_view id) const;

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const LabeledDataset>, std::less<>> datasets_;
    std::map<std::string, Principal, std::less<>> principals_by_token_;
    std::uint64_t next_id_ = 1;
    std::function<void(const LabeledDataset&)> hook_;
};

/// Sorts by id and rejects empty input, empty ids and duplicate ids.
LabeledItems normalize_items(LabeledItems items);

} // namespace meter
