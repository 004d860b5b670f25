#pragma once

namespace roofkit {

// Build stamp embedded in report provenance blocks. Deliberately free of
// timestamps so identical runs stay byte-identical.
inline constexpr const char* kVersion = "roofkit 0.1.0";

}  // namespace roofkit
