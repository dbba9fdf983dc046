#pragma once

#include <string>
#include <vector>

// Independent reference implementations, written straight from the formulas
// with no code shared with the library. Tests compare library results
// against these.
namespace oracles {

// exhaustive assignment: minimal-cost row->col permutation of an n x n cost
// matrix (row-major); n <= 9
std::vector<int> brute_force_assignment(const std::vector<double>& cost, int n);
double assignment_cost(const std::vector<double>& cost, int n, const std::vector<int>& perm);

// O(n^2) pairwise AUC: ties count 1/2
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// metrics on row-major H x W maps; gt entries are 0/1
double mae(const std::vector<double>& pred, const std::vector<int>& gt);
double f_measure(const std::vector<double>& pred, const std::vector<int>& gt, double threshold,
                 double beta2);
double max_f_measure(const std::vector<double>& pred, const std::vector<int>& gt, double beta2);
double weighted_f_measure(const std::vector<double>& pred, const std::vector<int>& gt, long h,
                          long w);
double s_measure(const std::vector<double>& pred, const std::vector<int>& gt, long h, long w);
double e_measure_adaptive(const std::vector<double>& pred, const std::vector<int>& gt);
double balanced_error_rate(const std::vector<double>& pred, const std::vector<int>& gt);

}  // namespace oracles
