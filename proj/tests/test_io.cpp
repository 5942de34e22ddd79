#include <catch2/catch_amalgamated.hpp>

#include <occlab/common.hpp>
#include <occlab/io.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

using namespace occlab;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("occlab_io_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void put(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("read_table tab separated") {
    TempDir td;
    put(td.file("t.tsv"), "a\tb\tc\n1\t2\t3\nx\ty\tz\n");
    const Table t = read_table(td.file("t.tsv"));
    CHECK(t.columns == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][2] == "z");
    CHECK(t.column_index("b") == 1);
    CHECK(t.column_index("nope") == -1);
}

TEST_CASE("read_table comma fallback when header has no tab") {
    TempDir td;
    put(td.file("t.csv"), "a,b\n1,2\n");
    const Table t = read_table(td.file("t.csv"));
    CHECK(t.columns == std::vector<std::string>{"a", "b"});
    CHECK(t.rows[0] == std::vector<std::string>{"1", "2"});
}

TEST_CASE("read_table strips CR and skips blank lines") {
    TempDir td;
    put(td.file("t.tsv"), "a\tb\r\n1\t2\r\n\n\r\n3\t4\n");
    const Table t = read_table(td.file("t.tsv"));
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "2");
    CHECK(t.rows[1][0] == "3");
}

TEST_CASE("read_table ragged row is fatal") {
    TempDir td;
    put(td.file("t.tsv"), "a\tb\n1\t2\n1\n");
    CHECK_THROWS_AS(read_table(td.file("t.tsv")), DataError);
}

TEST_CASE("read_table missing file is fatal") {
    CHECK_THROWS_AS(read_table("/nonexistent/path/file.tsv"), DataError);
}

TEST_CASE("read_table header only yields zero rows") {
    TempDir td;
    put(td.file("t.tsv"), "a\tb\n");
    const Table t = read_table(td.file("t.tsv"));
    CHECK(t.rows.empty());
    CHECK(t.columns.size() == 2);
}

TEST_CASE("read_table empty file yields empty table") {
    TempDir td;
    put(td.file("t.tsv"), "");
    const Table t = read_table(td.file("t.tsv"));
    CHECK(t.columns.empty());
    CHECK(t.rows.empty());
}

TEST_CASE("require_column reports the missing name") {
    TempDir td;
    put(td.file("t.tsv"), "a\tb\n1\t2\n");
    const Table t = read_table(td.file("t.tsv"));
    CHECK(t.require_column("a") == 0);
    CHECK_THROWS_AS(t.require_column("zz"), DataError);
}

TEST_CASE("parse_double accepts whole-cell numbers only") {
    REQUIRE(parse_double("1.5").has_value());
    CHECK(*parse_double("1.5") == 1.5);
    CHECK(*parse_double("-2e3") == -2000.0);
    CHECK(*parse_double("  3.25 ") == 3.25);
    CHECK_FALSE(parse_double("1.5x").has_value());
    CHECK_FALSE(parse_double("").has_value());
    CHECK_FALSE(parse_double("nope").has_value());
    CHECK_FALSE(parse_double("1.5 2.5").has_value());
}

TEST_CASE("parse_int accepts whole-cell integers only") {
    REQUIRE(parse_int("42").has_value());
    CHECK(*parse_int("42") == 42);
    CHECK(*parse_int("-7") == -7);
    CHECK_FALSE(parse_int("4.2").has_value());
    CHECK_FALSE(parse_int("").has_value());
    CHECK_FALSE(parse_int("4x").has_value());
}

TEST_CASE("table writer round-trip") {
    TempDir td;
    const std::string p = td.file("out.tsv");
    {
        TableWriter w(p, {"id", "value"});
        w.row_strings({"r1", format_double(0.5)});
        w.row_strings({"r2", format_double(1.0)});
    }
    const Table t = read_table(p);
    CHECK(t.columns == std::vector<std::string>{"id", "value"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "0.5");
    CHECK(t.rows[1][0] == "r2");
}

TEST_CASE("table writer refuses unwritable path") {
    CHECK_THROWS_AS(TableWriter("/nonexistent/dir/out.tsv"), DataError);
}

TEST_CASE("write_file then read_file round-trips bytes") {
    TempDir td;
    const std::string p = td.file("blob.txt");
    write_file(p, "line1\nline2\n");
    CHECK(read_file(p) == "line1\nline2\n");
    CHECK_THROWS_AS(read_file(td.file("missing.txt")), DataError);
}
