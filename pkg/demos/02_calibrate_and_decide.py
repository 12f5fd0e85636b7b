"""
From scores to verdicts
=======================

A detection logit alone does not say how surprised we should be.  Here we
build a calibration set from a few images, turn logits into conformal
p-values and let the decision rule abstain when the evidence is mixed.
Then a payload registry names who the image was issued to.
"""
import tempfile
from pathlib import Path

from provmark import transforms as T
from provmark.bench import build_corpus, list_dataset
from provmark.bench.calibration import build_calibration
from provmark.codec import SecretKey, decode_logits, embed
from provmark.decision import decide, match_payloads
from provmark.imaging import read_image
from provmark.payload import PayloadRegistry

work = Path(tempfile.mkdtemp(prefix="provmark-demo-"))
key = SecretKey.generate("demo")

# calibration images must not be the ones we later verify
build_corpus(work / "calib", n=6, seed=11)
calib_files = list_dataset(work / "calib")
calib = build_calibration(calib_files, key, transforms=("identity", "file format", "brightness",
                                                       "gaussian noise", "crop resize",
                                                       "rotation", "flip left-right"))
print(f"{calib.scores0.size} null scores, {calib.scores1.size} marked scores, "
      f"p-value resolution {calib.resolution:.4f}")

# %%
reg = PayloadRegistry()
for customer in range(10):
    reg.assign_code(customer)
print("registry:", len(reg), "entries, d_min", reg.d_min)

photo = read_image(build_corpus(work / "test", n=1, seed=99)[0])
marked = embed(photo, reg.get(4).code, key).quantized()

for name, img in (("clean", photo), ("marked", marked),
                  ("marked + jpeg40", T.apply("file format", T.WORST, marked, 0).quantized())):
    r = decode_logits(img, key)
    d = decide(r.detection_logit, calib, alpha=0.05)
    print(f"{name:>16}: rho0={d.rho0:.3f} rho1={d.rho1:.3f} -> {d.verdict.value}")
    if d.verdict.value == "watermarked":
        m = match_payloads(r.bit_logits, reg, calib, alpha=0.05)
        print(f"{'':>16}  payload match: {m.status}, entry {m.entry}, {m.accepted_count} accepted")
