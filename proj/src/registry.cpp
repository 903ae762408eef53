#include "meter/registry.hpp"

#include "meter/error.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace meter {

std::string_view to_string(Role role) {
    switch (role) {
    case Role::developer: return "developer";
    case Role::labeler: return "labeler";
    case Role::admin: return "admin";
    }
    return "developer";
}

Role parse_role(std::string_view text) {
    if (text == "developer") return Role::developer;
    if (text == "labeler") return Role::labeler;
    if (text == "admin") return Role::admin;
    invalid("invalid_role", "unknown role '" + std::string(text) + "' (expected developer, labeler or admin)");
}

LabeledItems normalize_items(LabeledItems items) {
    if (items.empty()) {
        invalid("empty_dataset", "a dataset needs at least one item");
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].first.empty()) {
            invalid("empty_example_id", "example ids must be nonempty");
        }
        if (i > 0 && items[i].first == items[i - 1].first) {
            invalid("duplicate_example_id", "example id '" + items[i].first + "' appears more than once");
        }
    }
    return items;
}

void Registry::add_principal(Principal principal) {
    if (principal.token.empty() || principal.name.empty()) {
        invalid("invalid_principal", "principals need a name and a token");
    }
    std::unique_lock lock(mutex_);
    const std::string token = principal.token;
    principals_by_token_[token] = std::move(principal);
}

const Principal& Registry::authenticate(std::string_view token) const {
    std::shared_lock lock(mutex_);
    auto it = principals_by_token_.find(token);
    if (token.empty() || it == principals_by_token_.end()) {
        fail(ErrorKind::authorization, "unauthenticated", "missing or unknown credential");
    }
    return it->second;
}

std::optional<Principal> Registry::find_principal(std::string_view name) const {
    std::shared_lock lock(mutex_);
    for (const auto& [token, p] : principals_by_token_) {
        if (p.name == name) {
            return p;
        }
    }
    return std::nullopt;
}

std::string Registry::register_dataset(const Principal& who, LabeledItems items, bool sealed, std::string id,
                                       std::int64_t now) {
    if (sealed && who.role == Role::developer) {
        fail(ErrorKind::authorization, "role_violation", "only labeler or admin principals may register sealed datasets");
    }
    auto dataset = std::make_shared<LabeledDataset>();
    dataset->items = normalize_items(std::move(items));
    dataset->sealed = sealed;
    dataset->owner_role = who.role;
    dataset->owner = who.name;
    dataset->created_at = now;
    {
        std::unique_lock lock(mutex_);
        if (id.empty()) {
            char buf[32];
            do {
                std::snprintf(buf, sizeof buf, "ds-%06llu", static_cast<unsigned long long>(next_id_++));
            } while (datasets_.count(std::string_view(buf)) != 0);
            id = buf;
        } else if (datasets_.count(id) != 0) {
            fail(ErrorKind::conflict, "dataset_exists", "dataset '" + id + "' already exists and is immutable");
        }
        dataset->id = id;
        datasets_.emplace(id, dataset);
        if (hook_) {
            hook_(*dataset);
        }
    }
    return id;
}

std::shared_ptr<const LabeledDataset> Registry::find(std::string_view id) const {
    std::shared_lock lock(mutex_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) {
        fail(ErrorKind::not_found, "dataset_not_found", "no dataset with id '" + std::string(id) + "'");
    }
    return it->second;
}

DatasetView Registry::describe(std::string_view id) const {
    auto ds = find(id);
    DatasetView view;
    view.id = ds->id;
    view.sealed = ds->sealed;
    view.released = ds->released;
    view.owner_role = ds->owner_role;
    view.created_at = ds->created_at;
    return view;
}

DatasetView Registry::read_labels(const Principal& who, std::string_view id) const {
    auto ds = find(id);
    DatasetView view = describe(id);
    view.ids.reserve(ds->size());
    for (const auto& [example, label] : ds->items) {
        view.ids.push_back(example);
    }
    if (ds->readable_by(who.role)) {
        std::vector<Label> labels;
        labels.reserve(ds->size());
        for (const auto& [example, label] : ds->items) {
            labels.push_back(label);
        }
        view.labels = std::move(labels);
    }
    return view;
}

bool Registry::contains(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return datasets_.find(id) != datasets_.end();
}

std::vector<std::string> Registry::dataset_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, ds] : datasets_) {
        out.push_back(id);
    }
    return out;
}

std::shared_ptr<const LabeledDataset> Registry::labels(TrustedKey, std::string_view id) const { return find(id); }

void Registry::release(TrustedKey, std::string_view id) {
    std::unique_lock lock(mutex_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) {
        fail(ErrorKind::not_found, "dataset_not_found", "no dataset with id '" + std::string(id) + "'");
    }
    // Items are shared with readers; swap in a copy carrying the new flags.
    auto copy = std::make_shared<LabeledDataset>(*it->second);
    copy->sealed = false;
    copy->released = true;
    it->second = std::move(copy);
}

void Registry::restore(TrustedKey, LabeledDataset dataset) {
    std::unique_lock lock(mutex_);
    std::string id = dataset.id;
    datasets_[id] = std::make_shared<const LabeledDataset>(std::move(dataset));
}

void Registry::on_register(std::function<void(const LabeledDataset&)> hook) {
    std::unique_lock lock(mutex_);
    hook_ = std::move(hook);
}

} // namespace meter
