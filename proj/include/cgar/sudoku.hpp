#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgar/common.hpp"

namespace cgar {

// Puzzles are flat row-major grids of g*g tokens. 0 marks an empty cell,
// 1..g are digits, so the model vocabulary is g + 1.
struct PuzzleInstance {
    int grid = 4;
    std::vector<int> input;
    std::vector<int> solution;

    int seq_len() const { return grid * grid; }
    bool operator==(const PuzzleInstance&) const = default;
};

void validate_grid_size(int g);

// True iff every row, column and box is a permutation of 1..g.
bool verify_solution(std::span<const int> cells, int g);

// input agrees with solution on every given, solution verifies, and all
// tokens are in range.
bool valid_instance(const PuzzleInstance& p);

struct SolveResult {
    int count = 0;              // number of solutions found, capped at limit
    std::vector<int> solution;  // first solution when count > 0
};

// Backtracking solver with most-constrained-cell ordering. Stops once
// `limit` solutions are found (2 is enough to test uniqueness). Givens out
// of [0, g] raise ValidationError; contradictions yield count 0.
SolveResult oracle_solve(std::span<const int> input, int g, int limit = 2);

// Fully solved grid, deterministic per seed: seeds the independent
// diagonal boxes randomly, then completes with a randomized solver.
std::vector<int> generate_solved_grid(int g, std::uint64_t seed);

// Blanks `holes` cells of a solved grid. With require_unique the result is
// kept uniquely solvable (cells that would introduce a second solution are
// skipped); throws ValidationError if no such puzzle exists after bounded
// retries.
PuzzleInstance punch_holes(std::span<const int> solution, int g, int holes,
                           std::uint64_t seed, bool require_unique = true);

// One element of the validity-preserving symmetry group. Applied as:
// optional transpose, then band and row-within-band permutations, then
// stack and column-within-stack permutations, then a digit relabeling.
struct SudokuTransform {
    int grid = 4;
    bool transpose = false;
    std::vector<int> band_perm;                // size s = sqrt(g)
    std::vector<int> stack_perm;               // size s
    std::vector<std::vector<int>> row_perms;   // per band, size s each
    std::vector<std::vector<int>> col_perms;   // per stack, size s each
    std::vector<int> digit_perm;               // size g, digit d -> digit_perm[d-1]

    static SudokuTransform identity(int g);
    static SudokuTransform random(int g, std::mt19937_64& rng);
};

// Applies a transform to both the givens and the solution. The result of a
// valid instance is again a valid instance.
PuzzleInstance augment(const PuzzleInstance& p, const SudokuTransform& t);

// Text format, one puzzle per line: "g;givens;solution" with cells as
// single digits (0 for empty).
std::string encode_line(const PuzzleInstance& p);
PuzzleInstance decode_line(const std::string& line);

void save_dataset(const std::vector<PuzzleInstance>& ps, const std::string& path);
std::vector<PuzzleInstance> load_dataset(const std::string& path);

struct GenConfig {
    int grid = 4;
    int count = 1000;        // base puzzles before augmentation
    int holes_min = 6;
    int holes_max = 10;
    bool require_unique = true;
    int augment = 1;         // train instances emitted per base puzzle
    double test_fraction = 0.2;
    std::uint64_t seed = 42;
};

// Base puzzles split 80/20 before augmentation, so train and test share no
// underlying grid. Only the train side is augmented.
struct DatasetSplit {
    std::vector<PuzzleInstance> train;
    std::vector<PuzzleInstance> test;
};

DatasetSplit generate_dataset(const GenConfig& cfg);

}  // namespace cgar
