#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "reference.hpp"
#include "splitfed/layers.hpp"
#include "splitfed/metrics.hpp"
#include "splitfed/segnet.hpp"

using namespace splitfed;

namespace {

ParamSet zero_biases(ParamSet p) {
  for (auto& e : p) {
    if (e.name.ends_with(".bias")) e.value = Tensor(e.value.dims(), 0.0f);
  }
  return p;
}

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Checks analytic derivatives of a scalar double-precision function against
// central differences. Perturbing an early weight moves every activation
// downstream, so the step is kept small; an entry whose h and h/2 estimates
// still disagree straddles a ReLU kink or pooling switch and is skipped.
template <class F>
void fd_check(FdResult& out, double analytic, double& x, F&& f) {
  const double h = 1e-6;
  const double n1 = ref::central_difference(f, x, h);
  const double n2 = ref::central_difference(f, x, h / 2);
  if (ref::rel_error(n1, n2, 1e-3) > 1e-6) {
    ++out.skipped;
    return;
  }
  out.max_rel_error = std::max(out.max_rel_error, ref::rel_error(analytic, n2, 1e-3));
  ++out.checked;
}

double sum(const ref::DTensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return s;
}

}  // namespace

TEST_CASE("small encoder on 32x32 gives a 32x4x4 latent") {
  const auto built = build_encoder({}, 1);
  CHECK(built.latent == LatentShape{32, 4, 4});
  const auto [latent, cache] = built.encoder.forward(built.params, ref::random_tensor({1, 32, 32}, 2, 0, 1));
  CHECK(latent.dims() == Dims{32, 4, 4});
}

TEST_CASE("encoder variants share the latent shape and grow in size") {
  std::size_t previous = 0;
  for (auto v : {EncoderVariant::small, EncoderVariant::medium, EncoderVariant::large}) {
    EncoderSpec spec;
    spec.variant = v;
    const auto built = build_encoder(spec, 3);
    CHECK(built.latent == LatentShape{32, 4, 4});
    CHECK(built.params.parameter_count() > previous);
    previous = built.params.parameter_count();
    CHECK(built.params.names() == built.encoder.network().param_names());
  }
}

TEST_CASE("encoder configuration errors") {
  EncoderSpec spec;
  spec.input_height = 36;
  CHECK_THROWS_AS(Encoder{spec}, ConfigError);
  CHECK_THROWS_AS(parse_variant("huge"), ConfigError);
  const auto built = build_encoder({}, 1);
  CHECK_THROWS_AS(built.encoder.forward(built.params, Tensor({1, 16, 16})), ShapeError);
}

TEST_CASE("encoder init is deterministic per seed") {
  CHECK(build_encoder({}, 9).params == build_encoder({}, 9).params);
  CHECK_FALSE(build_encoder({}, 9).params == build_encoder({}, 10).params);
}

TEST_CASE("encoder forward properties") {
  const auto built = build_encoder({}, 4);
  const auto latent = built.encoder.infer(zero_biases(built.params), Tensor({1, 32, 32}));
  for (float v : latent.values()) CHECK(v >= 0.0f);
  const auto a = built.encoder.infer(built.params, ref::random_tensor({1, 32, 32}, 5, 0, 1));
  const auto b = built.encoder.infer(built.params, ref::random_tensor({1, 32, 32}, 6, 0, 1));
  CHECK_FALSE(a == b);
}

TEST_CASE("encoder backward structure") {
  const auto built = build_encoder({}, 4);
  const auto [latent, cache] = built.encoder.forward(built.params, ref::random_tensor({1, 32, 32}, 5, 0, 1));
  const auto zero = built.encoder.backward(built.params, cache, Tensor(latent.dims()));
  CHECK(zero == built.params.zeros_like());
  const auto g = built.encoder.backward(built.params, cache, Tensor(latent.dims(), 1.0f));
  CHECK(g.names() == built.params.names());
  CHECK_THROWS_AS(built.encoder.backward(built.params, cache, Tensor({16, 4, 4})), ShapeError);
}

TEST_CASE("encoder weights: finite differences of the latent sum") {
  const auto built = build_encoder({}, 21);
  const Tensor image = ref::random_tensor({1, 32, 32}, 22, 0, 1);
  const auto [latent, cache] = built.encoder.forward(built.params, image);
  const auto grads = built.encoder.backward(built.params, cache, Tensor(latent.dims(), 1.0f));

  auto dparams = ref::widen(built.params);
  const auto dimage = ref::widen(image);
  auto f = [&] { return sum(ref::forward(built.encoder.network(), dparams, dimage)); };
  FdResult r;
  for (const auto& e : built.params) {
    auto& dt = ref::find(dparams, e.name);
    for (std::size_t i = 0; i < e.value.size(); i += 1 + e.value.size() / 6) {
      fd_check(r, grads.at(e.name)[i], dt.data[i], f);
    }
  }
  INFO("max rel error " << r.max_rel_error << ", checked " << r.checked << ", skipped " << r.skipped);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("decoder shapes and determinism") {
  const Decoder dec;
  const auto params = dec.init(3);
  const Tensor latent = ref::random_tensor({32, 4, 4}, 4, 0, 1);
  const auto [logits, cache] = dec.forward(params, latent);
  CHECK(logits.dims() == Dims{1, 32, 32});
  CHECK(dec.output_dims() == Dims{1, 32, 32});
  CHECK(dec.infer(params, latent) == logits);
  CHECK_THROWS_AS(dec.forward(params, Tensor({16, 4, 4})), ShapeError);
}

TEST_CASE("zero latent through a zero-bias decoder gives 0.5 everywhere") {
  const Decoder dec;
  const auto logits = dec.infer(zero_biases(dec.init(5)), Tensor({32, 4, 4}));
  for (float v : logits.values()) CHECK(v == 0.0f);
  const Tensor probs = sigmoid(logits);
  for (float v : probs.values()) CHECK(v == 0.5f);
}

TEST_CASE("decoder backward with zero upstream gradient") {
  const Decoder dec;
  const auto params = dec.init(5);
  const auto [logits, cache] = dec.forward(params, ref::random_tensor({32, 4, 4}, 6, 0, 1));
  const auto g = dec.backward(params, cache, Tensor(logits.dims()));
  CHECK(g.d_latent == Tensor({32, 4, 4}));
  CHECK(g.params == params.zeros_like());
  const auto skip = dec.backward(params, cache, Tensor(logits.dims(), 1.0f), {true, false});
  CHECK(skip.params.empty());
  CHECK(skip.d_latent == dec.backward(params, cache, Tensor(logits.dims(), 1.0f)).d_latent);
}

TEST_CASE("decoder latent: finite differences of the logit sum") {
  const Decoder dec;
  const auto params = dec.init(31);
  Tensor latent = ref::random_tensor({32, 4, 4}, 32, 0, 1);
  const auto [logits, cache] = dec.forward(params, latent);
  const auto g = dec.backward(params, cache, Tensor(logits.dims(), 1.0f));

  const auto dparams = ref::widen(params);
  auto dlatent = ref::widen(latent);
  auto f = [&] { return sum(ref::forward(dec.network(), dparams, dlatent)); };
  FdResult r;
  for (std::size_t i = 0; i < latent.size(); i += 3) fd_check(r, g.d_latent[i], dlatent.data[i], f);
  INFO("max rel error " << r.max_rel_error << ", checked " << r.checked << ", skipped " << r.skipped);
  CHECK(r.checked >= 100);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("chain: encoder grads from decoder dLatent match the full pipeline") {
  const auto built = build_encoder({}, 41);
  const Decoder dec;
  const auto dparams_dec = ref::widen(dec.init(42));
  const auto dec_params = dec.init(42);
  const Tensor image = ref::random_tensor({1, 32, 32}, 43, 0, 1);
  const Tensor mask = ref::random_mask({1, 1, 32, 32}, 44);

  const auto [latent, enc_cache] = built.encoder.forward(built.params, image);
  const auto [logits, dec_cache] = dec.forward(dec_params, latent);
  const auto loss = bce_from_logits(logits.reshaped({1, 1, 32, 32}), mask);
  const auto dg = dec.backward(dec_params, dec_cache, loss.d_logits.reshaped({1, 32, 32}));
  const auto grads = built.encoder.backward(built.params, enc_cache, dg.d_latent);

  auto dparams = ref::widen(built.params);
  const auto dimage = ref::widen(image);
  auto dmask = ref::widen(mask);
  auto f = [&] {
    auto z = ref::forward(dec.network(), dparams_dec, ref::forward(built.encoder.network(), dparams, dimage));
    return ref::bce(z, dmask);
  };
  FdResult r;
  for (const auto& e : built.params) {
    auto& dt = ref::find(dparams, e.name);
    for (std::size_t i = 0; i < e.value.size(); i += 1 + e.value.size() / 5) {
      fd_check(r, grads.at(e.name)[i], dt.data[i], f);
    }
  }
  INFO("max rel error " << r.max_rel_error << ", checked " << r.checked << ", skipped " << r.skipped);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("split forward equals the concatenated monolithic network bit for bit") {
  for (auto v : {EncoderVariant::small, EncoderVariant::large}) {
    EncoderSpec spec;
    spec.variant = v;
    const auto built = build_encoder(spec, 51);
    const Decoder dec;
    const auto dec_params = dec.init(52);
    const Network whole = concat(built.encoder.network(), dec.network());
    const ParamSet all = concat(built.params, dec_params);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const Tensor image = ref::random_tensor({1, 32, 32}, 60 + s, 0, 1);
      CHECK(whole.infer(all, image) == dec.infer(dec_params, built.encoder.infer(built.params, image)));
    }
  }
}

TEST_CASE("checkpoints round-trip with a JSON sidecar") {
  const auto dir = std::filesystem::temp_directory_path() / "splitfed_test_segnet";
  std::filesystem::create_directories(dir);
  EncoderSpec spec;
  spec.variant = EncoderVariant::medium;
  const auto built = build_encoder(spec, 71);
  save_encoder_checkpoint(dir / "enc.sfps", spec, built.params);
  CHECK(std::filesystem::exists(dir / "enc.json"));
  const auto [spec2, params2] = load_encoder_checkpoint(dir / "enc.sfps");
  CHECK(spec2 == spec);
  CHECK(params2 == built.params);

  const Decoder dec;
  save_decoder_checkpoint(dir / "dec.sfps", dec.spec(), dec.init(72));
  const auto [dspec, dparams] = load_decoder_checkpoint(dir / "dec.sfps");
  CHECK(dspec == dec.spec());
  CHECK(dparams == dec.init(72));
  CHECK_THROWS(load_decoder_checkpoint(dir / "enc.sfps"));
}
