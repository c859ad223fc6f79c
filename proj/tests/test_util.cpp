// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/util.hpp"

#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "otb/common.hpp"

using namespace otb;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("fnv1a64_hex is the zero-padded hash") {
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
  // hex form always has 16 digits
  for (const char* s : {"x", "yy", "zzz"}) CHECK(fnv1a64_hex(s).size() == 16);
}

TEST_CASE("base64 encodes the classic vectors") {
  const auto enc = [](const char* s) {
    return base64_encode(reinterpret_cast<const unsigned char*>(s), std::strlen(s));
  };
  CHECK(enc("Man") == "TWFu");
  CHECK(enc("Ma") == "TWE=");
  CHECK(enc("M") == "TQ==");
  CHECK(enc("") == "");
}

TEST_CASE("base64 round-trips binary data") {
  std::vector<unsigned char> data;
  for (int i = 0; i < 257; ++i) data.push_back(static_cast<unsigned char>(i * 37));
  const std::string text = base64_encode(data.data(), data.size());
  CHECK(base64_decode(text) == data);
}

TEST_CASE("base64_decode rejects malformed input") {
  CHECK_THROWS_AS(base64_decode("a"), Error);     // truncated quanta
  CHECK_THROWS_AS(base64_decode("ab!d"), Error);  // alphabet violation
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, -0.0, 42.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("text file round trip") {
  namespace fs = std::filesystem;
  fs::create_directories(OTB_TEST_TMPDIR);
  const std::string path = std::string(OTB_TEST_TMPDIR) + "/roundtrip.txt";
  const std::string body = "line one\nline two\n";
  write_text_file(path, body);
  CHECK(read_text_file(path) == body);
  CHECK_THROWS_AS(read_text_file(std::string(OTB_TEST_TMPDIR) + "/absent.txt"), Error);
}
