// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention visibility masks. Rows are queries, columns are keys; 1 means the
// key is visible.

#pragma once

#include <span>
#include <string>

#include "qdrec/matrix.hpp"
#include "qdrec/sequence.hpp"

namespace qdrec {

struct ComponentMasks {
  Matrix causal;
  Matrix session;
  Matrix invalidq;
};

/// causal[r][k] = [k <= r]. session[r][k] = 0 when r and k are non-S tokens of
/// different groups in one session. invalidq zeroes the column of every Q
/// token that is not a valid key, except its diagonal entry.
/// `session_mask = false` replaces the session mask with all ones.
ComponentMasks build_component_masks(const EventSequence& seq, bool session_mask = true);

/// Elementwise product; throws ValidationError on shape mismatch.
Matrix combine(const Matrix& causal, const Matrix& session, const Matrix& invalidq);

/// build_component_masks followed by combine.
Matrix build_mask(const EventSequence& seq, bool session_mask = true);

/// (N+C)x(N+C) candidate-scoring mask. The top-left block is `base`, the
/// top-right block zero and the bottom-right block the identity. Each
/// candidate row copies the base row of its placeholder with the placeholder's
/// own column cleared: the candidate stands in for the placeholder and sees
/// itself through the identity block instead.
Matrix expand_mask(const Matrix& base, std::span<const CandidateGroup> groups);

/// The C x N bottom-left block of expand_mask.
Matrix candidate_mask_rows(const Matrix& base, std::span<const CandidateGroup> groups);

/// S Q I F Q I F S Q I F: two groups in session 1 under scenario 1, one group
/// in session 2 under scenario 2. Only the middle Q is a valid key.
EventSequence worked_example_sequence();

/// Rows of 0/1 characters separated by newlines.
std::string format_mask(const Matrix& m);
/// Inverse of format_mask; throws ParseError on ragged or non-binary input.
Matrix parse_mask(std::string_view text);

}  // namespace qdrec
