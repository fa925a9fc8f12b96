"""Bottom-up flow on the bundled accelerometer: layout -> solid -> netlist,
then FEA, Krylov reduction and a full-versus-reduced transient.

Run ``python3 demos/accel_flow.py [outdir] [q]``.
"""

import sys
import tempfile
from pathlib import Path

from memsflow.demo import demo_pipeline

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="accel_"))
q = int(sys.argv[2]) if len(sys.argv) > 2 else 10

report = demo_pipeline("accel", out, q=q)
for line in report.lines():
    print(line)

m = report.metrics
print()
print(f"reduced order {m['q']} of {report.stage('mor')['N']} states")
print(f"worst probe relative L2 error {m['rel_l2']:.3%}, simulation {m['wall_time_ratio']:.1f}x faster")
print(f"artifacts in {out}: accel.esm, accel.net, fea/, reduced/, transient_*.csv")
