#include "doctest.h"
#include "sedn/io.hpp"
#include "support.hpp"

using namespace sedn;

TEST_SUITE("io_f64") {
  TEST_CASE("64-bit checkpoints round-trip and carry their dtype") {
    ModelConfig c;
    c.stem_channels = 4;
    c.node_channels = 2;
    c.aspp_channels = 2;
    c.decoder_channels = 4;
    c.aspp_dilations = {1};
    c.genotype = default_genotype({4, 8});
    SpikingEdn m(c);
    CheckpointMeta meta;
    meta.model = c;
    const Bytes b = encode_checkpoint(m, meta);
    CHECK(b[8] == static_cast<std::uint8_t>(DType::f64));
    LoadedCheckpoint ck = decode_checkpoint(b);
    TensorList x = m.tensors(), y = ck.model.tensors();
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(testing::max_abs_diff(*x[i].tensor, *y[i].tensor) == 0);
    Bytes bad = b;
    bad[8] = static_cast<std::uint8_t>(DType::f32);
    try {
      decode_checkpoint(bad);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 8);
    }
  }
}
