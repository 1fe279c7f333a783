#pragma once

#include "glandseg/classifier.hpp"
#include "glandseg/segmenter.hpp"

namespace test {

inline glandseg::ClassifierConfig tiny_classifier(int image_size = 32, int patch = 8) {
  glandseg::ClassifierConfig c;
  c.image_size = image_size;
  c.token_patch_size = patch;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.dropout = 0.0;
  return c;
}

inline glandseg::SegmenterConfig tiny_segmenter(int image_size = 64) {
  glandseg::SegmenterConfig c;
  c.image_size = image_size;
  c.encoder_patch = 16;
  c.encoder_dim = 16;
  c.encoder_depth = 1;
  c.encoder_heads = 2;
  c.embed_dim = 16;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  c.decoder_mlp_dim = 32;
  c.mask_in_chans = 8;
  return c;
}

}  // namespace test
