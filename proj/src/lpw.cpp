#include "stllm/eval/lpw.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace stllm::eval {
namespace {

void append_utf8(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, cp, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

bool is_punctuation(char32_t cp) { return (U_GET_GC_MASK(static_cast<UChar32>(cp)) & U_GC_P_MASK) != 0; }

std::string lpw_normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 cp;
    U8_NEXT(s, i, length, cp);
    if (cp < 0) cp = 0xFFFD;
    if (u_isUWhiteSpace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (is_punctuation(static_cast<char32_t>(cp))) continue;
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    append_utf8(out, u_foldCase(cp, U_FOLD_CASE_DEFAULT));
  }
  return out;
}

}  // namespace stllm::eval
