#pragma once

#include <string>
#include <utility>
#include <vector>

namespace driftless::testing {

inline const char* const kValid = R"({"1": "a cat", "2": "a cat sits", "3": "a cat sleeps"})";

// One broken rule per entry; each must be rejected for an expected frame count of 3.
inline const std::vector<std::pair<const char*, std::string>> kMutations = {
    {"missing middle key", R"({"1": "a", "3": "c"})"},
    {"missing last key", R"({"1": "a", "2": "b"})"},
    {"missing first key", R"({"2": "b", "3": "c"})"},
    {"extra key", R"({"1": "a", "2": "b", "3": "c", "4": "d"})"},
    {"keys out of order", R"({"2": "b", "1": "a", "3": "c"})"},
    {"duplicate key", R"({"1": "a", "1": "b", "2": "b", "3": "c"})"},
    {"zero-based keys", R"({"0": "a", "1": "b", "2": "c"})"},
    {"leading zero key", R"({"01": "a", "2": "b", "3": "c"})"},
    {"non-numeric key", R"({"one": "a", "2": "b", "3": "c"})"},
    {"negative key", R"({"-1": "a", "2": "b", "3": "c"})"},
    {"padded key", R"({" 1": "a", "2": "b", "3": "c"})"},
    {"bare integer keys", R"({1: "a", 2: "b", 3: "c"})"},
    {"number value", R"({"1": "a", "2": 2, "3": "c"})"},
    {"null value", R"({"1": "a", "2": null, "3": "c"})"},
    {"array value", R"({"1": "a", "2": ["b"], "3": "c"})"},
    {"object value", R"({"1": "a", "2": {"text": "b"}, "3": "c"})"},
    {"empty caption", R"({"1": "a", "2": "", "3": "c"})"},
    {"blank caption", R"({"1": "a", "2": "   ", "3": "c"})"},
    {"trailing commentary", R"({"1": "a", "2": "b", "3": "c"} Hope this helps!)"},
    {"leading commentary", R"(Here you go: {"1": "a", "2": "b", "3": "c"})"},
    {"two objects", R"({"1": "a", "2": "b", "3": "c"} {"1": "a"})"},
    {"array root", R"(["a", "b", "c"])"},
    {"string root", R"("a b c")"},
    {"trailing comma", R"({"1": "a", "2": "b", "3": "c",})"},
    {"unclosed fence", "```json\n{\"1\": \"a\", \"2\": \"b\", \"3\": \"c\"}\n"},
    {"text after opening fence", "```json here it is\n{\"1\": \"a\", \"2\": \"b\", \"3\": \"c\"}\n```"},
    {"commentary after fence", "```\n{\"1\": \"a\", \"2\": \"b\", \"3\": \"c\"}\n```\nDone."},
    {"empty document", "   "},
    {"empty fenced document", "```\n```"},
    {"truncated object", R"({"1": "a", "2": "b", "3": "c")"},
};

}  // namespace driftless::testing
