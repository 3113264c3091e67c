#pragma once

#include <string>
#include <vector>

#include "haluprobe/trace.h"

namespace haluprobe::testing {

// Trace with all sections present and every buffer zeroed, for hand-set
// values.
TraceSet blank_set(int prompt_len, int gen_len, int layers, int heads,
                   int hidden_dim, int ffn_dim, int topk, int vocab);

struct ClosedFormCheck {
  std::string name;
  double got = 0.0;
  double want = 0.0;
};

// Library values on constructions with a known exact answer: uniform
// lookback (n-1)/n, uniform entropy ln k, one-hot entropy 0, avg_jsd at the
// last layer 0, disjoint one-hot JSD ln 2.
std::vector<ClosedFormCheck> closed_form_checks();

}  // namespace haluprobe::testing
