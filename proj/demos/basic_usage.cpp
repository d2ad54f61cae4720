// Embed a wrapped Gaussian-shading watermark, push it through the default
// noise channel and verify it.

#include <cstdio>

#include "latentmark/latentmark.hpp"

int main() {
  using namespace latentmark;
  RngState rng = RngState::from_seed(7);
  SwaConfig cfg = SwaConfig::gaussian_shading(WatermarkPayload::random_balanced(kGsBits, rng));

  const EmbedResult emb = swa_embed(cfg, rng);
  const LatentTensor noisy = apply(ChannelModel::default_calibrated(), emb.latent, rng);
  const VerifyResult res = swa_verify(noisy, cfg);

  std::printf("seed %s -> recovered %s\n", emb.seed.to_hex().c_str(), res.recovered_seed.to_hex().c_str());
  std::printf("bit accuracy %.4f, watermark %s\n", *res.bit_accuracy, res.decision ? "present" : "absent");
  return 0;
}
