import numpy as np, sys, warnings
sys.path.insert(0, "/root/pkg/src")
from genzsl.diffusion import (NoiseSchedule, forward_noise, denoising_loss, cfg_predict,
                              ToyDenoiser, train_toy_generator, ToyGenerator, LatentCodec,
                              sample, DenoiserInterface, sinusoidal_time_embedding)
from genzsl.config import GeneratorConfig
from genzsl.errors import NumericalFailureError, StructuralError
from genzsl import kernels as K

sched = NoiseSchedule.linear().check()
print("linear schedule: T", sched.T, "ab[1]", sched.alpha_bar_at(1), "ab[T]", f"{sched.alpha_bar_at(1000):.2e}")
ts = sched.inference_steps(50)
assert ts[0] == 1000 and ts[-1] == 20 and len(ts) == 50
assert list(sched.inference_steps(1)) == [1000]

# endpoints via permissive schedules
one = NoiseSchedule([1.0]); zero = NoiseSchedule([0.0])
z0 = np.arange(6.0).reshape(2, 3); ep = np.ones((2, 3)) * 0.5
assert np.array_equal(forward_noise(z0, 1, ep, one), z0)
assert np.array_equal(forward_noise(z0, 1, ep, zero), ep)

# MC moments at ab=0.5
half = NoiseSchedule([0.5])
rng = np.random.default_rng(0)
zz = np.array([1.0, -2.0, 0.3])
draws = np.array([forward_noise(zz, 1, rng.standard_normal(3), half) for _ in range(10000)])
mu, var = draws.mean(0), draws.var(0)
se_mu = np.sqrt(0.5 / 10000); se_var = 0.5 * np.sqrt(2 / 10000)
assert np.all(np.abs(mu - np.sqrt(0.5) * zz) < 5 * se_mu), (mu, np.sqrt(0.5)*zz)
assert np.all(np.abs(var - 0.5) < 5 * se_var), var
print("MC moments ok")

# loss endpoints with oracle stubs
class Echo(DenoiserInterface):
    def __init__(self, e): self.e = e
    def predict(self, z, t, cond=None): return self.e
class Zero(DenoiserInterface):
    def predict(self, z, t, cond=None): return np.zeros_like(z)
assert denoising_loss(Echo(ep), z0, None, 1, ep, half) == 0.0
assert abs(denoising_loss(Zero(), z0, None, 1, ep, half) - (ep**2).reshape(2,-1).sum(1).mean()) < 1e-15
print("loss endpoints ok")

# cfg affine + w endpoints on toy denoiser
d = ToyDenoiser(sched, latent_shape=(3, 8, 8), cond_dim=4, hidden=16, rng=np.random.default_rng(3))
zt = np.random.default_rng(1).standard_normal((3, 8, 8))
cond = np.array([0.3, -1.0, 0.2, 0.9])
pc = d.predict(zt, 500, cond); pu = d.predict(zt, 500, None)
assert np.array_equal(cfg_predict(d, zt, 500, cond, 1.0), pc)
assert np.array_equal(cfg_predict(d, zt, 500, cond, 0.0), pu)
for w in (0.5, 3.0, 7.0):
    assert np.abs(cfg_predict(d, zt, 500, cond, w) - (pu + w * (pc - pu))).max() < 1e-12
print("cfg affine ok")

# tiny training + sampling round
cfgG = GeneratorConfig(train_steps=120, train_batch=16, hidden_width=32, sampling_steps=10)
imgs = np.random.default_rng(2).random((40, 3, 8, 8)) * 0.8 + 0.1
conds = np.tile(cond, (40, 1))
den = train_toy_generator(imgs, conds, sched, cfgG, seed=1)
pl = den.training_info["probe_eps_loss"]
print("probe curve", round(pl[0]), "->", round(pl[-1]))
den2 = train_toy_generator(imgs, conds, sched, cfgG, seed=1)
assert np.array_equal(den.W1, den2.W1)
print("generator training deterministic")
with warnings.catch_warnings(record=True) as wlist:
    warnings.simplefilter("always")
    train_toy_generator(imgs[:8], conds[:8], sched, GeneratorConfig(train_steps=3, cond_dropout=0.0, hidden_width=8), seed=0)
    assert any("unconditional" in str(x.message) for x in wlist)
print("dropout-0 warning ok")

# ToyGenerator vs generic sample agreement
class FakeEnc:
    def encode_tokens(self, ids, overrides=None): return cond
gen = ToyGenerator(den, FakeEnc(), cfgG)
res = gen.sample(cond, steps=10, w=3.0, seed=5, want_cache=True)
res_b = gen.sample(cond, steps=10, w=3.0, seed=5)
assert np.array_equal(res.images, res_b.images)
img_g, z_g = sample(den, cond, 10, 3.0, 5, sched, z0_clip=cfgG.z0_clip)
print("generic vs fused max diff:", np.abs(res.latents[0].ravel() - z_g.ravel()).max())
assert np.abs(res.latents[0].ravel() - z_g.ravel()).max() < 1e-9
assert res.images.min() >= 0 and res.images.max() <= 1

# backward FD through full chain incl codec
dimg = np.random.default_rng(9).standard_normal(res.images.shape)
dcond = gen.sample_backward(dimg, res)
epsfd = 1e-6; errs = []
for j in range(4):
    cp, cm = cond.copy(), cond.copy(); cp[j] += epsfd; cm[j] -= epsfd
    fp = (gen.sample(cp, steps=10, w=3.0, seed=5).images * dimg).sum()
    fm = (gen.sample(cm, steps=10, w=3.0, seed=5).images * dimg).sum()
    fd = (fp - fm) / (2 * epsfd)
    errs.append(abs(fd - dcond[0, j]) / max(abs(fd), 1e-10))
print("full-chain fd rel errs:", [f"{e:.1e}" for e in errs])
assert max(errs) < 1e-5, errs

# numerical failure path: exploding stub via generic sample
class Boom(DenoiserInterface):
    latent_shape = (2, 2)
    def predict(self, z, t, cond=None): return z * 1e6
try:
    sample(Boom(), None, 5, 1.0, 0, sched)
    print("FAIL no blowup")
except NumericalFailureError as e:
    print("numerical failure carries step:", e.step)
print("ALL DIFFUSION CHECKS PASS")
