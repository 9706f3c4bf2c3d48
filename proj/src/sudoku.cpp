#include "cgar/sudoku.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cgar {

void validate_grid_size(int g) {
    if (g != 4 && g != 9)
        throw ValidationError("grid size must be 4 or 9, got " + std::to_string(g));
}

bool verify_solution(std::span<const int> cells, int g) {
    validate_grid_size(g);
    if (static_cast<int>(cells.size()) != g * g) return false;
    const int s = static_cast<int>(std::round(std::sqrt(g)));
    const unsigned full = (1u << (g + 1)) - 2;  // bits 1..g set
    for (int i = 0; i < g; ++i) {
        unsigned row = 0, col = 0, box = 0;
        for (int j = 0; j < g; ++j) {
            auto mark = [&](unsigned& mask, int v) {
                if (v < 1 || v > g) return false;
                if (mask & (1u << v)) return false;
                mask |= 1u << v;
                return true;
            };
            if (!mark(row, cells[i * g + j])) return false;
            if (!mark(col, cells[j * g + i])) return false;
            const int br = (i / s) * s + j / s, bc = (i % s) * s + j % s;
            if (!mark(box, cells[br * g + bc])) return false;
        }
        if (row != full || col != full || box != full) return false;
    }
    return true;
}

bool valid_instance(const PuzzleInstance& p) {
    if (p.grid != 4 && p.grid != 9) return false;
    const int L = p.seq_len();
    if (static_cast<int>(p.input.size()) != L ||
        static_cast<int>(p.solution.size()) != L)
        return false;
    if (!verify_solution(p.solution, p.grid)) return false;
    for (int i = 0; i < L; ++i) {
        if (p.input[i] < 0 || p.input[i] > p.grid) return false;
        if (p.input[i] != 0 && p.input[i] != p.solution[i]) return false;
    }
    return true;
}

namespace {

// Candidate masks per row/column/box; most-constrained-cell search.
struct Solver {
    int g, s;
    std::vector<int> board;
    std::vector<unsigned> row, col, box;
    int limit;
    int found = 0;
    std::vector<int> first;
    std::mt19937_64* rng = nullptr;  // when set, candidate order is shuffled

    Solver(std::span<const int> input, int g_, int limit_)
        : g(g_),
          s(static_cast<int>(std::round(std::sqrt(g_)))),
          board(input.begin(), input.end()),
          row(g, 0),
          col(g, 0),
          box(g, 0),
          limit(limit_) {}

    int box_of(int r, int c) const { return (r / s) * s + c / s; }

    // False if the givens already conflict.
    bool init_masks() {
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) {
                int v = board[r * g + c];
                if (v == 0) continue;
                unsigned bit = 1u << v;
                if ((row[r] | col[c] | box[box_of(r, c)]) & bit) return false;
                row[r] |= bit;
                col[c] |= bit;
                box[box_of(r, c)] |= bit;
            }
        return true;
    }

    void search() {
        if (found >= limit) return;
        int best = -1, best_count = g + 1;
        unsigned best_mask = 0;
        for (int r = 0; r < g && best_count > 1; ++r)
            for (int c = 0; c < g; ++c) {
                if (board[r * g + c] != 0) continue;
                unsigned used = row[r] | col[c] | box[box_of(r, c)];
                unsigned free = ~used & (((1u << (g + 1)) - 2));
                int cnt = __builtin_popcount(free);
                if (cnt < best_count) {
                    best = r * g + c;
                    best_count = cnt;
                    best_mask = free;
                    if (cnt <= 1) break;
                }
            }
        if (best == -1) {
            if (found++ == 0) first = board;
            return;
        }
        if (best_count == 0) return;
        std::vector<int> cands;
        for (int v = 1; v <= g; ++v)
            if (best_mask & (1u << v)) cands.push_back(v);
        if (rng)
            for (int i = static_cast<int>(cands.size()) - 1; i > 0; --i)
                std::swap(cands[i], cands[rand_index(*rng, i + 1)]);
        const int r = best / g, c = best % g, b = box_of(r, c);
        for (int v : cands) {
            unsigned bit = 1u << v;
            board[best] = v;
            row[r] |= bit;
            col[c] |= bit;
            box[b] |= bit;
            search();
            board[best] = 0;
            row[r] &= ~bit;
            col[c] &= ~bit;
            box[b] &= ~bit;
            if (found >= limit) return;
        }
    }
};

std::vector<int> shuffled_digits(int g, std::mt19937_64& rng) {
    std::vector<int> d(g);
    std::iota(d.begin(), d.end(), 1);
    for (int i = g - 1; i > 0; --i) std::swap(d[i], d[rand_index(rng, i + 1)]);
    return d;
}

std::vector<int> random_perm(int n, std::mt19937_64& rng) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rand_index(rng, i + 1)]);
    return p;
}

}  // namespace

SolveResult oracle_solve(std::span<const int> input, int g, int limit) {
    validate_grid_size(g);
    if (static_cast<int>(input.size()) != g * g)
        throw ValidationError("oracle_solve: expected " + std::to_string(g * g) +
                              " cells");
    for (int v : input)
        if (v < 0 || v > g)
            throw ValidationError("oracle_solve: cell value out of range [0, g]");
    if (limit < 1) throw ValidationError("oracle_solve: limit must be positive");

    Solver sv(input, g, limit);
    if (!sv.init_masks()) return {};
    sv.search();
    SolveResult out;
    out.count = sv.found;
    out.solution = std::move(sv.first);
    return out;
}

std::vector<int> generate_solved_grid(int g, std::uint64_t seed) {
    validate_grid_size(g);
    std::mt19937_64 rng(seed);
    const int s = static_cast<int>(std::round(std::sqrt(g)));
    // The s boxes on the main diagonal share no row/column, so each can be
    // seeded with an independent random permutation.  Some seedings admit no
    // completion (easy to hit at g=4), so reseed from the continuing stream
    // until the randomized solve succeeds; the result stays a pure function
    // of the seed.
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<int> board(g * g, 0);
        for (int b = 0; b < s; ++b) {
            auto digits = shuffled_digits(g, rng);
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c)
                    board[(b * s + r) * g + (b * s + c)] = digits[r * s + c];
        }
        Solver sv(board, g, 1);
        sv.rng = &rng;
        if (!sv.init_masks()) continue;
        sv.search();
        if (sv.found > 0) return sv.first;
    }
    throw NumericError("generate_solved_grid: no completion found");
}

PuzzleInstance punch_holes(std::span<const int> solution, int g, int holes,
                           std::uint64_t seed, bool require_unique) {
    validate_grid_size(g);
    if (!verify_solution(solution, g))
        throw ValidationError("punch_holes: input is not a solved grid");
    if (holes < 0 || holes > g * g)
        throw ValidationError("punch_holes: hole count out of range [0, " +
                              std::to_string(g * g) + "]");

    std::mt19937_64 rng(seed);
    const int retries = 64;
    for (int attempt = 0; attempt < retries; ++attempt) {
        PuzzleInstance p;
        p.grid = g;
        p.solution.assign(solution.begin(), solution.end());
        p.input = p.solution;
        auto order = random_perm(g * g, rng);
        int removed = 0;
        for (int pos : order) {
            if (removed == holes) break;
            const int keep = p.input[pos];
            p.input[pos] = 0;
            if (require_unique && oracle_solve(p.input, g, 2).count != 1)
                p.input[pos] = keep;
            else
                ++removed;
        }
        if (removed == holes) return p;
        if (!require_unique) break;
    }
    throw ValidationError("punch_holes: could not remove " + std::to_string(holes) +
                          " cells while keeping the solution unique");
}

SudokuTransform SudokuTransform::identity(int g) {
    validate_grid_size(g);
    const int s = static_cast<int>(std::round(std::sqrt(g)));
    SudokuTransform t;
    t.grid = g;
    t.band_perm.resize(s);
    std::iota(t.band_perm.begin(), t.band_perm.end(), 0);
    t.stack_perm = t.band_perm;
    std::vector<int> unit(s);
    std::iota(unit.begin(), unit.end(), 0);
    t.row_perms.assign(s, unit);
    t.col_perms.assign(s, unit);
    t.digit_perm.resize(g);
    std::iota(t.digit_perm.begin(), t.digit_perm.end(), 1);
    return t;
}

SudokuTransform SudokuTransform::random(int g, std::mt19937_64& rng) {
    validate_grid_size(g);
    const int s = static_cast<int>(std::round(std::sqrt(g)));
    SudokuTransform t;
    t.grid = g;
    t.transpose = rand_index(rng, 2) == 1;
    t.band_perm = random_perm(s, rng);
    t.stack_perm = random_perm(s, rng);
    for (int i = 0; i < s; ++i) t.row_perms.push_back(random_perm(s, rng));
    for (int i = 0; i < s; ++i) t.col_perms.push_back(random_perm(s, rng));
    t.digit_perm = shuffled_digits(g, rng);
    return t;
}

namespace {

void validate_transform(const SudokuTransform& t) {
    validate_grid_size(t.grid);
    const int s = static_cast<int>(std::round(std::sqrt(t.grid)));
    auto is_perm = [](const std::vector<int>& p, int n, int base) {
        if (static_cast<int>(p.size()) != n) return false;
        std::vector<bool> seen(n, false);
        for (int v : p) {
            if (v < base || v >= base + n || seen[v - base]) return false;
            seen[v - base] = true;
        }
        return true;
    };
    bool ok = is_perm(t.band_perm, s, 0) && is_perm(t.stack_perm, s, 0) &&
              is_perm(t.digit_perm, t.grid, 1) &&
              static_cast<int>(t.row_perms.size()) == s &&
              static_cast<int>(t.col_perms.size()) == s;
    if (ok)
        for (int i = 0; i < s; ++i)
            ok = ok && is_perm(t.row_perms[i], s, 0) && is_perm(t.col_perms[i], s, 0);
    if (!ok) throw ValidationError("augment: malformed transform descriptor");
}

std::vector<int> apply_cells(const std::vector<int>& cells, const SudokuTransform& t,
                             bool relabel_digits) {
    const int g = t.grid;
    const int s = static_cast<int>(std::round(std::sqrt(g)));
    std::vector<int> cur = cells;
    if (t.transpose) {
        std::vector<int> next(g * g);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) next[r * g + c] = cur[c * g + r];
        cur = next;
    }
    std::vector<int> next(g * g);
    for (int r = 0; r < g; ++r) {
        const int b = r / s, i = r % s;
        const int src_r = t.band_perm[b] * s + t.row_perms[b][i];
        for (int c = 0; c < g; ++c) {
            const int st = c / s, j = c % s;
            const int src_c = t.stack_perm[st] * s + t.col_perms[st][j];
            next[r * g + c] = cur[src_r * g + src_c];
        }
    }
    if (relabel_digits)
        for (int& v : next)
            if (v != 0) v = t.digit_perm[v - 1];
    return next;
}

}  // namespace

PuzzleInstance augment(const PuzzleInstance& p, const SudokuTransform& t) {
    if (p.grid != t.grid)
        throw ValidationError("augment: transform grid size does not match puzzle");
    validate_transform(t);
    PuzzleInstance out;
    out.grid = p.grid;
    out.input = apply_cells(p.input, t, true);
    out.solution = apply_cells(p.solution, t, true);
    return out;
}

std::string encode_line(const PuzzleInstance& p) {
    std::string line = std::to_string(p.grid);
    line += ';';
    for (int v : p.input) line += static_cast<char>('0' + v);
    line += ';';
    for (int v : p.solution) line += static_cast<char>('0' + v);
    return line;
}

PuzzleInstance decode_line(const std::string& line) {
    auto s1 = line.find(';');
    auto s2 = line.find(';', s1 == std::string::npos ? 0 : s1 + 1);
    if (s1 == std::string::npos || s2 == std::string::npos)
        throw IoError("dataset line must have three ';'-separated fields: " + line);
    PuzzleInstance p;
    try {
        p.grid = std::stoi(line.substr(0, s1));
    } catch (const std::exception&) {
        throw IoError("dataset line has a malformed grid size: " + line);
    }
    if (p.grid != 4 && p.grid != 9)
        throw IoError("dataset line has unsupported grid size: " + line);
    auto parse_cells = [&](std::size_t from, std::size_t to, std::vector<int>& out) {
        for (std::size_t i = from; i < to; ++i) {
            char ch = line[i];
            if (ch < '0' || ch > '9') throw IoError("dataset cell is not a digit: " + line);
            out.push_back(ch - '0');
        }
    };
    parse_cells(s1 + 1, s2, p.input);
    parse_cells(s2 + 1, line.size(), p.solution);
    const int L = p.seq_len();
    if (static_cast<int>(p.input.size()) != L ||
        static_cast<int>(p.solution.size()) != L)
        throw IoError("dataset line has wrong cell count: " + line);
    for (int v : p.input)
        if (v > p.grid) throw IoError("dataset given out of range: " + line);
    for (int v : p.solution)
        if (v < 1 || v > p.grid) throw IoError("dataset solution cell out of range: " + line);
    return p;
}

void save_dataset(const std::vector<PuzzleInstance>& ps, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& p : ps) out << encode_line(p) << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<PuzzleInstance> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    std::vector<PuzzleInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(decode_line(line));
    }
    if (out.empty()) throw IoError("dataset '" + path + "' contains no puzzles");
    return out;
}

DatasetSplit generate_dataset(const GenConfig& cfg) {
    validate_grid_size(cfg.grid);
    if (cfg.count < 1) throw ValidationError("gen: count must be positive");
    if (cfg.holes_min < 0 || cfg.holes_max < cfg.holes_min ||
        cfg.holes_max > cfg.grid * cfg.grid)
        throw ValidationError("gen: need 0 <= holes_min <= holes_max <= g*g");
    if (cfg.augment < 1) throw ValidationError("gen: augment must be at least 1");
    if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0))
        throw ValidationError("gen: test_fraction must lie in [0, 1)");

    std::vector<PuzzleInstance> bases;
    bases.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        auto solved = generate_solved_grid(cfg.grid, mix_seed(cfg.seed, 3 * i));
        std::mt19937_64 hole_rng(mix_seed(cfg.seed, 3 * i + 1));
        const int span = cfg.holes_max - cfg.holes_min + 1;
        const int holes = cfg.holes_min + rand_index(hole_rng, span);
        bases.push_back(punch_holes(solved, cfg.grid, holes,
                                    mix_seed(cfg.seed, 3 * i + 2),
                                    cfg.require_unique));
    }

    const int n_test = static_cast<int>(std::lround(cfg.count * cfg.test_fraction));
    const int n_train = cfg.count - n_test;
    DatasetSplit split;
    std::mt19937_64 aug_rng(mix_seed(cfg.seed, 0x617567));
    for (int i = 0; i < n_train; ++i) {
        split.train.push_back(bases[i]);
        for (int a = 1; a < cfg.augment; ++a)
            split.train.push_back(augment(bases[i], SudokuTransform::random(cfg.grid, aug_rng)));
    }
    for (int i = n_train; i < cfg.count; ++i) split.test.push_back(bases[i]);
    return split;
}

}  // namespace cgar
