#include "meter/error.hpp"
#include "meter/registry.hpp"
#include "meter/serialize.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <thread>

using namespace meter;
using namespace meter::testing;

namespace {

void add_principals(Registry& r) {
    r.add_principal(kDeveloper);
    r.add_principal(kLabeler);
    r.add_principal(kAdmin);
}

template <class F>
std::string error_code(F f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST(Registry, LabelerRegistersLargeSealedSet) {
    Registry r;
    add_principals(r);
    const auto id = r.register_dataset(kLabeler, zero_items("t", 50777), true);
    EXPECT_FALSE(id.empty());
    EXPECT_TRUE(r.describe(id).sealed);
    EXPECT_EQ(r.read_labels(kLabeler, id).labels->size(), 50777u);
}

TEST(Registry, DeveloperCannotSeal) {
    Registry r;
    add_principals(r);
    EXPECT_EQ(error_code([&] { r.register_dataset(kDeveloper, zero_items("t", 10), true); }), "role_violation");
    EXPECT_TRUE(r.dataset_ids().empty());
}

TEST(Registry, DeveloperValidationSetOfAnySize) {
    Registry r;
    add_principals(r);
    EXPECT_NO_THROW(r.register_dataset(kDeveloper, zero_items("v", 1), false));
    EXPECT_NO_THROW(r.register_dataset(kDeveloper, zero_items("w", 3000), false));
}

TEST(Registry, RejectsEmptyAndDuplicateItems) {
    Registry r;
    add_principals(r);
    EXPECT_EQ(error_code([&] { r.register_dataset(kLabeler, {}, true); }), "empty_dataset");
    EXPECT_EQ(error_code([&] { r.register_dataset(kLabeler, {{"a", 1}, {"b", 0}, {"a", 2}}, true); }),
              "duplicate_example_id");
    EXPECT_EQ(error_code([&] { r.register_dataset(kLabeler, {{"", 1}}, true); }), "empty_example_id");
}

TEST(Registry, DatasetsAreImmutable) {
    Registry r;
    add_principals(r);
    r.register_dataset(kLabeler, {{"a", 1}}, true, "fixed");
    EXPECT_EQ(error_code([&] { r.register_dataset(kLabeler, {{"a", 2}}, true, "fixed"); }), "dataset_exists");
    EXPECT_EQ(r.read_labels(kLabeler, "fixed").labels->at(0), 1);
}

TEST(Registry, ReadRules) {
    Registry r;
    add_principals(r);
    const auto test = r.register_dataset(kLabeler, {{"x", 3}, {"y", 4}}, true);
    const auto val = r.register_dataset(kDeveloper, {{"p", 1}}, false);

    const auto dev_test = r.read_labels(kDeveloper, test);
    EXPECT_FALSE(dev_test.labels.has_value());
    EXPECT_EQ(dev_test.ids, (std::vector<std::string>{"x", "y"}));

    const auto lab_val = r.read_labels(kLabeler, val);
    ASSERT_TRUE(lab_val.labels.has_value());
    EXPECT_EQ(lab_val.labels->at(0), 1);

    EXPECT_EQ(error_code([&] { r.read_labels(kDeveloper, "nope"); }), "dataset_not_found");
}

TEST(Registry, Authentication) {
    Registry r;
    add_principals(r);
    EXPECT_EQ(r.authenticate("lab-token").name, "lee");
    EXPECT_EQ(error_code([&] { r.authenticate("wrong"); }), "unauthenticated");
    EXPECT_EQ(error_code([&] { r.authenticate(""); }), "unauthenticated");
}

TEST(Registry, AccessMatrixNeverDisclosesSealedLabelsToDevelopers) {
    for (Role role : {Role::developer, Role::labeler, Role::admin}) {
        for (bool sealed : {false, true}) {
            Registry r;
    add_principals(r);
            const Principal who{"p", role, "t"};
            const auto id = r.register_dataset(kAdmin, {{"a", 7}, {"b", 9}}, sealed);
            const auto view = r.read_labels(who, id);
            const auto meta = r.describe(id);
            EXPECT_FALSE(meta.labels.has_value());
            const bool may_read = !(role == Role::developer && sealed);
            EXPECT_EQ(view.labels.has_value(), may_read) << to_string(role) << " sealed=" << sealed;
            const std::string payload = json(view).dump() + json(meta).dump();
            if (!may_read) {
                EXPECT_EQ(payload.find("\"label\""), std::string::npos);
            }
        }
    }
}

TEST(Registry, SealedRecordsAreOpaqueAtRest) {
    LabeledDataset d;
    d.id = "t";
    d.sealed = true;
    d.owner_role = Role::labeler;
    d.items = {{"alpha", 123456}, {"beta", 654321}};
    const auto record = dataset_record(d);
    const auto text = record.dump();
    EXPECT_EQ(text.find("alpha"), std::string::npos);
    EXPECT_EQ(text.find("123456"), std::string::npos);
    const auto back = dataset_from_record(record);
    EXPECT_EQ(back.items, d.items);
    EXPECT_TRUE(back.sealed);
}

TEST(Registry, JsonLinesParsing) {
    std::istringstream good("{\"id\":\"a\",\"label\":1}\n\n{\"id\":\"b\",\"label\":0}\r\n");
    const auto items = parse_label_lines(good);
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[1].first, "b");

    std::istringstream dup("{\"id\":\"a\",\"label\":1}\n{\"id\":\"b\",\"label\":0}\n{\"id\":\"a\",\"label\":2}\n");
    try {
        parse_label_lines(dup);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "duplicate_example_id");
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }

    std::istringstream bad("{\"id\":\"a\",\"pred\":1.5}\n");
    try {
        parse_prediction_lines(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "invalid_upload");
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
    std::istringstream label_not_int("{\"id\":\"a\",\"label\":\"1\"}\n");
    EXPECT_THROW(parse_label_lines(label_not_int), Error);
}

TEST(Registry, ConcurrentRegistrationsGetDistinctIds) {
    Registry r;
    std::vector<std::thread> threads;
    std::vector<std::string> ids(8);
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] { ids[static_cast<std::size_t>(i)] = r.register_dataset(kAdmin, {{"a", i}}, true); });
    }
    for (auto& t : threads) {
        t.join();
    }
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(std::unique(ids.begin(), ids.end()), ids.end());
    EXPECT_EQ(r.dataset_ids().size(), 8u);
}
