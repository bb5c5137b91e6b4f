#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

using namespace cfx;
using namespace cfx::testing;

namespace {

const char* kTwoFeatureSchema = R"({
  "features": [
    {"name": "age", "kind": "numeric", "resolution": 1, "display_name": "age", "protected": true},
    {"name": "income", "kind": "numeric", "resolution": 1, "display_name": "income", "protected": false}
  ],
  "target_name": "outcome",
  "classes": ["good", "bad"],
  "protected_combinations": []
})";

template <class E, class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(Schema, LoadsTwoFeatureSchema) {
  auto s = load_schema(kTwoFeatureSchema);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_TRUE(s[0].is_protected);
  EXPECT_FALSE(s[1].is_protected);
  EXPECT_EQ(s.classes, (std::vector<std::string>{"good", "bad"}));
  EXPECT_EQ(s.target_name, "outcome");
}

TEST(Schema, EmptyClassListIsRejected) {
  auto doc = json::parse(kTwoFeatureSchema);
  doc["classes"] = json::array();
  auto msg = error_of<SchemaError>([&] { schema_from_json(doc); });
  EXPECT_NE(msg.find("empty class list"), std::string::npos) << msg;
  EXPECT_NE(msg.find("schema.classes"), std::string::npos) << msg;
}

TEST(Schema, UnknownProtectedCombinationFeatureIsNamed) {
  auto doc = json::parse(kTwoFeatureSchema);
  doc["protected_combinations"] = json::array({json::array({"age", "ethnicity"})});
  auto msg = error_of<SchemaError>([&] { schema_from_json(doc); });
  EXPECT_NE(msg.find("ethnicity"), std::string::npos) << msg;
  EXPECT_NE(msg.find("protected_combinations[0]"), std::string::npos) << msg;
}

TEST(Schema, StructuralErrorsCarryFieldPaths) {
  auto doc = json::parse(kTwoFeatureSchema);
  doc["features"][1]["name"] = "age";
  EXPECT_NE(error_of<SchemaError>([&] { schema_from_json(doc); }).find("schema.features[1].name"), std::string::npos);

  doc = json::parse(kTwoFeatureSchema);
  doc["features"][0]["resolution"] = 0;
  EXPECT_NE(error_of<SchemaError>([&] { schema_from_json(doc); }).find("schema.features[0].resolution"),
            std::string::npos);

  doc = json::parse(kTwoFeatureSchema);
  doc["features"][0] = {{"name", "colour"}, {"kind", "categorical"}, {"categories", {"red", "red"}}};
  EXPECT_NE(error_of<SchemaError>([&] { schema_from_json(doc); }).find("duplicate category"), std::string::npos);

  doc = json::parse(kTwoFeatureSchema);
  doc["target_name"] = "age";
  EXPECT_NE(error_of<SchemaError>([&] { schema_from_json(doc); }).find("schema.target_name"), std::string::npos);

  doc = json::parse(kTwoFeatureSchema);
  doc["classes"] = {"only"};
  EXPECT_THROW(schema_from_json(doc), SchemaError);

  EXPECT_THROW(load_schema("{not json"), SchemaError);
  EXPECT_THROW(load_schema(R"({"features": [], "target_name": "y", "classes": ["a","b"]})"), SchemaError);
}

TEST(Schema, RoundTripThroughJson) {
  for (const auto& s : {t0_schema(), german_schema(), load_schema(kTwoFeatureSchema)}) {
    auto again = load_schema(s.to_json().dump());
    EXPECT_EQ(again, s);
    EXPECT_EQ(again.fingerprint(), s.fingerprint());
  }
}

TEST(Schema, GermanSchemaShape) {
  auto s = german_schema();
  EXPECT_EQ(s.size(), 13u);
  std::size_t categorical = 0;
  for (const auto& f : s.features) categorical += !f.numeric();
  EXPECT_GT(categorical, s.size() / 2);
  ASSERT_EQ(s.protected_combinations.size(), 1u);
  EXPECT_TRUE(s[*s.index_of("sex")].is_protected);
}

TEST(Dataset, ThreeRowCsv) {
  auto s = t0_schema();
  auto d = load_dataset("age,income,outcome\n25,40,bad\n30,50,good\r\n\"41\",60,good\n", s);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(std::get<double>(d.rows[2][0]), 41.0);
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0, 0}));
}

TEST(Dataset, ColumnOrderDoesNotMatter) {
  auto s = t0_schema();
  auto a = load_dataset("age,income,outcome\n25,40,bad\n", s);
  auto b = load_dataset("outcome,income,age\nbad,40,25\n", s);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Dataset, UnknownClassLabelReportsRow) {
  auto msg = error_of<DataError>([] { load_dataset("age,income,outcome\n25,40,bad\n26,41,ok\n", t0_schema()); });
  EXPECT_NE(msg.find("row index 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("ok"), std::string::npos) << msg;
}

TEST(Dataset, BadCellsReportRowAndColumn) {
  auto msg = error_of<DataError>([] { load_dataset("age,income,outcome\n25,forty,bad\n", t0_schema()); });
  EXPECT_NE(msg.find("row index 0"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'income'"), std::string::npos) << msg;
  EXPECT_THROW(load_dataset("age,income,outcome\n25,,bad\n", t0_schema()), DataError);
  EXPECT_THROW(load_dataset("age,income,outcome\n25,40\n", t0_schema()), DataError);
}

TEST(Dataset, UnknownCategoryRejected) {
  auto s = german_schema();
  auto csv = read_file(data_path("german/german_credit.csv"));
  auto first_nl = csv.find('\n');
  auto second_nl = csv.find('\n', first_nl + 1);
  auto bad = csv.substr(0, second_nl + 1);
  auto pos = bad.find("radio_tv");
  bad.replace(pos, 8, "spaceship");
  auto msg = error_of<DataError>([&] { load_dataset(bad, s); });
  EXPECT_NE(msg.find("'purpose'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("spaceship"), std::string::npos) << msg;
}

TEST(Dataset, MissingColumnRejectedForEveryPermutation) {
  auto s = t0_schema();
  std::vector<std::string> cols{"age", "income", "outcome"};
  for (const auto& drop : cols) {
    std::vector<std::string> rest;
    for (const auto& c : cols)
      if (c != drop) rest.push_back(c);
    std::sort(rest.begin(), rest.end());
    do {
      std::string header = rest[0] + "," + rest[1] + "\n1,2\n";
      auto msg = error_of<DataError>([&] { load_dataset(header, s); });
      EXPECT_NE(msg.find("missing column '" + drop + "'"), std::string::npos) << msg;
    } while (std::next_permutation(rest.begin(), rest.end()));
  }
}

TEST(Dataset, GermanFixtureLoads) {
  auto d = german_data();
  EXPECT_EQ(d.size(), 1000u);
  EXPECT_EQ(d.schema.size(), 13u);
  EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), 0u), 700);
}

TEST(Csv, QuotingAndLineEndings) {
  auto r = parse_csv("\xEF\xBB\xBF" "a,b\r\n\"x,\"\"y\"\"\",2\n\n3,\"multi\nline\"\n");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[1][0], "x,\"y\"");
  EXPECT_EQ(r[2][1], "multi\nline");
  EXPECT_EQ(r[0][0], "a");
}

TEST(Instance, ValidateCoercesText) {
  auto s = t0_schema();
  auto inst = validate_instance(s, {{"age", "25"}, {"income", "40"}});
  EXPECT_EQ(inst, make_instance({25.0, 40.0}));
}

TEST(Instance, ValidateNamesMissingAndExtraFeatures) {
  auto s = t0_schema();
  EXPECT_EQ(error_of<DataError>([&] { validate_instance(s, {{"age", "25"}}); }), "missing income");
  EXPECT_EQ(error_of<DataError>([&] { validate_instance(s, {{"age", "25"}, {"income", "1"}, {"x", "1"}}); }),
            "extra feature x");
  auto msg = error_of<DataError>([&] { validate_instance(s, {{"age", "twenty"}, {"income", "1"}}); });
  EXPECT_NE(msg.find("age"), std::string::npos);
  EXPECT_NE(msg.find("twenty"), std::string::npos);
}

TEST(Instance, ValidateIsTotalOverValidValues) {
  auto s = german_schema();
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    std::map<std::string, std::string> raw;
    for (const auto& f : s.features) {
      raw[f.name] = f.numeric() ? std::to_string(rng() % 1000) : f.categories[rng() % f.categories.size()];
    }
    EXPECT_NO_THROW(validate_instance(s, raw));
  }
}

TEST(Instance, CategoryLabelsMatchCaseInsensitively) {
  auto s = german_schema();
  auto f = *s.index_of("housing");
  EXPECT_EQ(std::get<std::string>(parse_value(s[f], "OWN")), "own");
}

TEST(Instance, LiteralAndJsonForms) {
  auto s = t0_schema();
  EXPECT_EQ(parse_instance_literal(s, "age=25, income=40"), make_instance({25.0, 40.0}));
  auto j = instance_to_json(s, make_instance({25.0, 40.0}));
  EXPECT_EQ(j.dump(), R"({"age":25,"income":40})");
  EXPECT_EQ(instance_from_json(s, j), make_instance({25.0, 40.0}));
  EXPECT_THROW(parse_instance_literal(s, "age 25"), DataError);
  EXPECT_THROW(instance_from_json(s, json::array()), DataError);
}

TEST(Personas, GermanFileHasTen) {
  auto p = german_personas();
  EXPECT_EQ(p.size(), 10u);
  EXPECT_EQ(p.front().id, "p1");
}

TEST(Personas, EmptyListIsValid) { EXPECT_TRUE(load_personas("[]", t0_schema()).empty()); }

TEST(Personas, ErrorsNamePersonaAndFeature) {
  auto s = t0_schema();
  auto msg = error_of<DataError>(
      [&] { load_personas(R"([{"id": "p7", "values": {"age": "abc", "income": 3}}])", s); });
  EXPECT_NE(msg.find("p7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("age"), std::string::npos) << msg;
  EXPECT_THROW(load_personas(R"([{"id": "a", "values": {"age": 1, "income": 3}},
                                 {"id": "a", "values": {"age": 1, "income": 3}}])",
                             s),
               DataError);
}

TEST(Personas, OrderPreservedAndRoundTrips) {
  auto s = t0_schema();
  auto p = t0_personas();
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].id, "x0");
  EXPECT_EQ(p[2].id, "wealthy");
  auto again = load_personas(personas_to_json(s, p).dump(), s);
  ASSERT_EQ(again.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(again[i].instance, p[i].instance);
}

TEST(Util, NumberFormatting) {
  EXPECT_EQ(format_number(31), "31");
  EXPECT_EQ(format_number(22.5), "22.5");
  EXPECT_EQ(format_number(-3), "-3");
  EXPECT_EQ(format_number(kInf), "+∞");
  EXPECT_EQ(format_number(-kInf), "−∞");
  EXPECT_FALSE(parse_number("12abc"));
  EXPECT_EQ(*parse_number(" 1.5 "), 1.5);
}
