#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "cgar/sudoku.hpp"

using namespace cgar;

namespace {

const std::vector<int> kSolved4 = {
    1, 2, 3, 4,
    3, 4, 1, 2,
    2, 1, 4, 3,
    4, 3, 2, 1,
};

}  // namespace

TEST_CASE("solution verification catches each kind of violation") {
    CHECK(verify_solution(kSolved4, 4));
    auto bad = kSolved4;
    bad[0] = 2;  // duplicate in row and column
    CHECK_FALSE(verify_solution(bad, 4));
    bad = kSolved4;
    bad[5] = 0;  // out of digit range
    CHECK_FALSE(verify_solution(bad, 4));
    CHECK_FALSE(verify_solution(std::vector<int>(15, 1), 4));
    // Box violation with rows and columns intact:
    // swapping two rows in different bands keeps rows/cols valid but this
    // particular swap breaks boxes.
    std::vector<int> box_bad = {
        1, 2, 3, 4,
        2, 1, 4, 3,
        3, 4, 1, 2,
        4, 3, 2, 1,
    };
    CHECK_FALSE(verify_solution(box_bad, 4));
    CHECK_THROWS_AS((void)verify_solution(kSolved4, 5), ValidationError);
}

TEST_CASE("oracle solver counts solutions and respects limits") {
    std::vector<int> puzzle = kSolved4;
    puzzle[0] = puzzle[5] = puzzle[10] = puzzle[15] = 0;  // diagonal blanks
    SolveResult res = oracle_solve(puzzle, 4);
    CHECK(res.count == 1);
    CHECK(res.solution == kSolved4);

    // An empty grid has many completions; limit caps the search.
    SolveResult many = oracle_solve(std::vector<int>(16, 0), 4, 2);
    CHECK(many.count == 2);
    SolveResult more = oracle_solve(std::vector<int>(16, 0), 4, 50);
    CHECK(more.count == 50);

    // Contradictory givens: two 1s in the first row.
    std::vector<int> contra(16, 0);
    contra[0] = contra[1] = 1;
    CHECK(oracle_solve(contra, 4).count == 0);

    CHECK_THROWS_AS((void)oracle_solve(std::vector<int>(16, 5), 4), ValidationError);
    CHECK_THROWS_AS((void)oracle_solve(std::vector<int>(3, 0), 4), ValidationError);
    CHECK_THROWS_AS((void)oracle_solve(puzzle, 4, 0), ValidationError);
}

TEST_CASE("generated grids are solved grids, deterministic per seed") {
    for (int g : {4, 9}) {
        for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
            auto a = generate_solved_grid(g, seed);
            CHECK(verify_solution(a, g));
            CHECK(a == generate_solved_grid(g, seed));
        }
    }
}

TEST_CASE("distinct seeds give distinct 9x9 grids") {
    std::set<std::vector<int>> seen;
    for (std::uint64_t seed = 0; seed < 300; ++seed)
        seen.insert(generate_solved_grid(9, seed));
    // Sampling 300 of ~6.7e21 grids should never collide.
    CHECK(seen.size() == 300);
}

TEST_CASE("hole punching keeps instances valid and uniquely solvable") {
    auto solved = generate_solved_grid(4, 7);
    for (int holes : {0, 4, 8}) {
        PuzzleInstance p = punch_holes(solved, 4, holes, 11);
        CHECK(valid_instance(p));
        int blanks = 0;
        for (int v : p.input) blanks += v == 0;
        CHECK(blanks == holes);
        SolveResult res = oracle_solve(p.input, 4);
        CHECK(res.count == 1);
        CHECK(res.solution == p.solution);
    }
    CHECK_THROWS_AS((void)punch_holes(solved, 4, 17, 1), ValidationError);
    CHECK_THROWS_AS((void)punch_holes(std::vector<int>(16, 1), 4, 2, 1),
                    ValidationError);
    // A fully blanked grid cannot stay unique.
    CHECK_THROWS_AS((void)punch_holes(solved, 4, 16, 1, true), ValidationError);
    // ...but is fine when uniqueness is not required.
    PuzzleInstance open = punch_holes(solved, 4, 16, 1, false);
    CHECK(valid_instance(open));
}

TEST_CASE("symmetry transforms preserve validity and uniqueness") {
    auto solved = generate_solved_grid(9, 3);
    PuzzleInstance p = punch_holes(solved, 9, 30, 5);
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 8; ++rep) {
        SudokuTransform t = SudokuTransform::random(9, rng);
        PuzzleInstance q = augment(p, t);
        CHECK(valid_instance(q));
        SolveResult res = oracle_solve(q.input, 9);
        CHECK(res.count == 1);
        CHECK(res.solution == q.solution);
    }
}

TEST_CASE("identity transform is a no-op; digit relabel keeps blanks blank") {
    auto solved = generate_solved_grid(4, 21);
    PuzzleInstance p = punch_holes(solved, 4, 6, 9);
    CHECK(augment(p, SudokuTransform::identity(4)) == p);

    SudokuTransform relabel = SudokuTransform::identity(4);
    relabel.digit_perm = {2, 1, 4, 3};
    PuzzleInstance q = augment(p, relabel);
    for (int i = 0; i < 16; ++i) {
        CHECK((q.input[i] == 0) == (p.input[i] == 0));
        if (p.input[i] != 0) CHECK(q.input[i] == relabel.digit_perm[p.input[i] - 1]);
    }
}

TEST_CASE("malformed transforms are rejected") {
    auto solved = generate_solved_grid(4, 2);
    PuzzleInstance p = punch_holes(solved, 4, 4, 2);
    SudokuTransform t = SudokuTransform::identity(4);
    t.digit_perm = {1, 1, 3, 4};  // not a bijection
    CHECK_THROWS_AS((void)augment(p, t), ValidationError);
    t = SudokuTransform::identity(4);
    t.band_perm = {1};  // wrong size
    CHECK_THROWS_AS((void)augment(p, t), ValidationError);
    t = SudokuTransform::identity(4);
    t.row_perms[0] = {2, 3};  // out of range
    CHECK_THROWS_AS((void)augment(p, t), ValidationError);
}

TEST_CASE("line codec round-trips and rejects malformed lines") {
    auto solved = generate_solved_grid(4, 31);
    PuzzleInstance p = punch_holes(solved, 4, 7, 3);
    CHECK(decode_line(encode_line(p)) == p);

    CHECK_THROWS_AS((void)decode_line(""), IoError);
    CHECK_THROWS_AS((void)decode_line("5;0000;1111"), IoError);
    CHECK_THROWS_AS((void)decode_line("4;000;1234123412341234"), IoError);
    CHECK_THROWS_AS((void)decode_line("4;000000000000000x;1243341221344321"), IoError);
    // Solution must actually solve the grid.
    CHECK_THROWS_AS((void)decode_line("4;0000000000000000;1111111111111111"), IoError);
    // Givens must agree with the solution ("2" vs solution's "1" at cell 0).
    CHECK_THROWS_AS((void)decode_line("4;2000000000000000;1234341221434321"), IoError);
}

TEST_CASE("dataset files round-trip") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "cgar_sudoku_test";
    fs::create_directories(dir);
    auto path = (dir / "tiny.txt").string();

    GenConfig cfg;
    cfg.count = 20;
    cfg.seed = 5;
    DatasetSplit split = generate_dataset(cfg);
    save_dataset(split.train, path);
    CHECK(load_dataset(path) == split.train);
    CHECK_THROWS_AS((void)load_dataset((dir / "missing.txt").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("dataset generation is deterministic with a clean split") {
    GenConfig cfg;
    cfg.grid = 4;
    cfg.count = 30;
    cfg.holes_min = 5;
    cfg.holes_max = 9;
    cfg.augment = 3;
    cfg.seed = 77;

    DatasetSplit a = generate_dataset(cfg);
    DatasetSplit b = generate_dataset(cfg);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);

    CHECK(a.test.size() == 6);    // round(30 * 0.2)
    CHECK(a.train.size() == 72);  // 24 bases x 3 instances

    for (const auto& p : a.train) {
        CHECK(valid_instance(p));
        int blanks = 0;
        for (int v : p.input) blanks += v == 0;
        CHECK(blanks >= cfg.holes_min);
        CHECK(blanks <= cfg.holes_max);
        CHECK(oracle_solve(p.input, 4).count == 1);
    }
    for (const auto& p : a.test) CHECK(valid_instance(p));

    // Test grids never appear among train solutions (split by base grid).
    std::set<std::vector<int>> train_solutions;
    for (const auto& p : a.train) train_solutions.insert(p.solution);
    // Augmented copies of a train base may coincide with another grid, but
    // the unaugmented test bases come from disjoint base indices, so their
    // exact (input, solution) pairs must not repeat in train.
    std::set<std::pair<std::vector<int>, std::vector<int>>> train_pairs;
    for (const auto& p : a.train) train_pairs.insert({p.input, p.solution});
    for (const auto& p : a.test)
        CHECK(train_pairs.find({p.input, p.solution}) == train_pairs.end());

    DatasetSplit c = generate_dataset([&] {
        GenConfig d = cfg;
        d.seed = 78;
        return d;
    }());
    CHECK(c.train != a.train);
}

TEST_CASE("generation config is validated") {
    GenConfig cfg;
    cfg.count = 0;
    CHECK_THROWS_AS((void)generate_dataset(cfg), ValidationError);
    cfg = {};
    cfg.holes_min = 9;
    cfg.holes_max = 5;
    CHECK_THROWS_AS((void)generate_dataset(cfg), ValidationError);
    cfg = {};
    cfg.test_fraction = 1.5;
    CHECK_THROWS_AS((void)generate_dataset(cfg), ValidationError);
    cfg = {};
    cfg.augment = 0;
    CHECK_THROWS_AS((void)generate_dataset(cfg), ValidationError);
    cfg = {};
    cfg.grid = 5;
    CHECK_THROWS_AS((void)generate_dataset(cfg), ValidationError);
}
