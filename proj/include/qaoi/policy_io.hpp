#pragma once

// Versioned text format for randomized policies.
//
//   qaoi-policy 1
//   spec_hash <16 hex digits>
//   kind joint
//   states <S> actions <A>
//   <state_index> <action_id> <probability>      (nonzero entries, %.17g)
//   end
//
// Per-source policies use `kind per_source`, a `sources <n>` line, a
// `tie_break <rule>` line and one `section <i> <ra|gaw> states <S> actions <A>`
// block per source, each closed by `end`. Probabilities survive a round trip
// bit-exactly.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <variant>

#include "qaoi/occupancy.hpp"
#include "qaoi/weakly_coupled.hpp"

namespace qaoi {

class PolicyFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_policy(const SystemSpec& spec, const RandomizedPolicy& policy, std::ostream& os);
void write_policy(const SystemSpec& spec, const TruncatedPolicy& policy, std::ostream& os);

using LoadedPolicy = std::variant<RandomizedPolicy, TruncatedPolicy>;

/// Parses either kind. Throws PolicyFormatError on malformed input or when
/// the recorded spec hash differs from spec.hash().
LoadedPolicy read_policy(const SystemSpec& spec, std::istream& is);

}  // namespace qaoi
