// Shared fixtures for the test suite.
#pragma once

#include <string>

namespace testprog {

// The walk-through program: a 254-entry table scan, a branch on a loaded
// secret, one store per branch side, and a final secret-indexed load.
inline const std::string motivating = R"(
# Constant-time table lookup that leaks under branch misprediction.
var S : u8[254]
var x : u8
var v1 : u8
var v2 : u8
var i : reg u8
var t : reg u8
var u : reg u8
secret x

L0: assign i = 0
L1: br i < 254 ? L2 : L5
L2: load t = S[i]
L3: assign i = i + 1
L4: jmp L1
L5: load t = x[0]
L6: br t > 128 ? L7 : L9
L7: store v1[0] = 1
L8: jmp L10
L9: store v2[0] = 1
L10: load u = S[t]
L11: halt
)";

inline const std::string straightline = R"(
var A : u8[4]
var r : reg u8
L0: load r = A[0]
L1: load r = A[1]
L2: store A[2] = r + 1
L3: halt
)";

} // namespace testprog
