import numpy as np, sys, time
sys.path.insert(0, "/root/pkg/src")
from genzsl.shapes import make_toy_dataset, build_toy_encoder, build_toy_backbone
from genzsl.config import ToyDataConfig, CdmConfig, GeneratorConfig, TokenConfig
from genzsl.data import TRAIN_SEEN, TEST_UNSEEN
from genzsl.prototypes import build_prototypes, PROTOTYPE_TEMPLATE, fill_template
from genzsl.cdm import train_cdm, cdm_accuracy
from genzsl.diffusion import NoiseSchedule, train_toy_generator, ToyGenerator
from genzsl.tokens import (init_dct, assemble_prompt, optimize_dct, token_loss_and_grad,
                           synthesize_class_set, frozen_fingerprints)

SEED = 7
tcfg = ToyDataConfig()
ds = make_toy_dataset(tcfg, seed=SEED)
enc = build_toy_encoder(tcfg, seed=SEED)
bb = build_toy_backbone(tcfg, seed=SEED)
bank = build_prototypes(ds.space, enc)
Xtr = bb.extract(ds.images[TRAIN_SEEN])
cdm = train_cdm(Xtr, ds.labels[TRAIN_SEEN], bank, ds.space, CdmConfig(), seed=SEED)
print("cdm seen acc:", round(cdm.meta["final_seen_accuracy"], 3))

# generator on seen images with per-class prototype prompts
gcfg = GeneratorConfig(image_size=32)
sched = NoiseSchedule.linear(gcfg.train_T).check()
prompt_cond = {c: enc.encode(fill_template(PROTOTYPE_TEMPLATE, ds.space.display_name(c)))
               for c in ds.space.seen}
conds = np.stack([prompt_cond[l] for l in ds.labels[TRAIN_SEEN]])
t0 = time.time()
den = train_toy_generator(ds.images[TRAIN_SEEN], conds, sched, gcfg, seed=SEED)
pl = den.training_info["probe_eps_loss"]
print(f"generator {time.time()-t0:.0f}s  probe {pl[0]:.0f}->{pl[-1]:.0f} ({100*(1-pl[-1]/pl[0]):.0f}% down)")
gen = ToyGenerator(den, enc, gcfg)

# seen-prompt sampling sanity: can the CDM recognize generated seen classes?
for c in ("red_circle", "green_square"):
    res = gen.sample(prompt_cond[c], seed=3)
    f = bb.extract(res.images)
    sc = cdm.scores(f, bank, ds.space.seen)
    pred = sorted(ds.space.seen)[int(sc.argmax())]
    print(f"  gen seen {c}: cdm says {pred}")

# DCT for both unseen classes
tk = TokenConfig()
states = {}
fp_before = frozen_fingerprints(gen, cdm, bb, enc, vocabulary=["a", "photo", "of", "green", "circle"])
for cid in ds.space.unseen:
    st = init_dct(cid, enc)
    assert np.array_equal(st.embedding, enc.embedding_of(enc.tokenize("a")[0]))
    t0 = time.time()
    st = optimize_dct(st, gen, enc, cdm, bb, bank, ds.space, tk, gamma=1.0, seed=SEED)
    accs = [h["batch_accuracy"] for h in st.history]
    losses = [round(h["loss"], 3) for h in st.history]
    print(f"{cid}: {time.time()-t0:.1f}s stop={st.stop_reason} accs={accs}")
    print(f"   losses={losses}")
    states[cid] = st
fp_after = frozen_fingerprints(gen, cdm, bb, enc, vocabulary=["a", "photo", "of", "green", "circle"])
assert fp_before == fp_after, "FROZEN PARAMETER DRIFT"
print("bitwise frozen-parameter audit ok")

# FD check on the guidance gradient
st = init_dct("green_circle", enc)
loss0, g = token_loss_and_grad(st, gen, enc, cdm, bb, bank, ds.space, tk, seed=SEED)
eps = 1e-5; errs = []
for j in (0, 5, 11):
    ep_, em_ = st.embedding.copy(), st.embedding.copy()
    ep_[j] += eps; em_[j] -= eps
    st.embedding[...] = ep_; lp, _ = token_loss_and_grad(st, gen, enc, cdm, bb, bank, ds.space, tk, seed=SEED)
    st.embedding[...] = em_; lm, _ = token_loss_and_grad(st, gen, enc, cdm, bb, bank, ds.space, tk, seed=SEED)
    st.embedding[j] += eps  # restore
    fd = (lp - lm) / (2 * eps)
    errs.append(abs(fd - g[j]) / max(abs(fd), 1e-12))
print("token-grad fd rel errs:", [f"{e:.1e}" for e in errs])
assert max(errs) < 1e-4, errs

# synthesis determinism + unseen efficacy
sset = synthesize_class_set(states["green_circle"], gen, enc,
                            ds.space.display_name("green_circle"), n_gen=24, seed_base=100)
sset2 = synthesize_class_set(states["green_circle"], gen, enc,
                             ds.space.display_name("green_circle"), n_gen=24, seed_base=100)
assert np.array_equal(sset.images, sset2.images)
print("synthesis deterministic;", len(sset), "images, prompt:", sset.prompt)

# do generated unseen images classify correctly among unseen classes?
for cid, st in states.items():
    ss = synthesize_class_set(st, gen, enc, ds.space.display_name(cid), n_gen=24, seed_base=500)
    f = bb.extract(ss.images)
    S = cdm.scores(f, bank, sorted(ds.space.unseen))
    acc = float((S.argmax(1) == sorted(ds.space.unseen).index(cid)).mean())
    rgb = ss.images[:, :, 8:24, 8:24].mean(axis=(0, 2, 3))
    print(f"{cid}: gen-batch unseen-acc {acc:.2f}  center RGB {rgb.round(3)}")
