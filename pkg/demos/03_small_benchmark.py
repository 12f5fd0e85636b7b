"""
A benchmark you can run over coffee
===================================

Eight images, a third of the transform catalogue, both strength modes.
The threshold is fitted once on worst-case negatives and then shared by
every row of the table.
"""
import tempfile
from pathlib import Path

from provmark.bench import BenchConfig, build_corpus, render_report, run_benchmark

data = Path(tempfile.mkdtemp(prefix="provmark-bench-")) / "corpus"
build_corpus(data, n=8, seed=0)

config = BenchConfig(
    dataset=str(data),
    target_fpr=0.05,  # 8 images cannot resolve anything finer
    transforms=("identity", "brightness", "hue", "file format", "gaussian blur",
                "gaussian noise", "impulse noise", "emoji overlay", "crop resize",
                "rotation", "flip left-right", "combined nocrop"),
)
report = run_benchmark(config, progress=lambda i, n: print(f"\rimage {i}/{n}", end=""))
print()
print(render_report(report, "markdown").decode())

# per-transform detail lives in the rows
for row in report.rows:
    if row.kind == "transform" and row.mode == "worst":
        print(f"{row.label:>16}  TPR [{row.tpr_lo:.2f}, {row.tpr_hi:.2f}]  bits {row.bit_accuracy:.3f}")

print(f"\nembed {report.timings['embed_mean_s'] * 1e3:.0f} ms/image, "
      f"decode {report.timings['decode_mean_s'] * 1e3:.0f} ms/call")
