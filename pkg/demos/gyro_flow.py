"""Top-down flow on the bundled gyroscope: netlist -> solid -> mask layout.

Run ``python3 demos/gyro_flow.py [outdir]``. The script builds the solid
model and the layout from the same netlist, checks that both routes to the
layout agree, and prints the drive-mode resonance from the lumped model and
from a beam FEA of the same suspension.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from memsflow import fixtures
from memsflow.cif import emit_cif
from memsflow.esm import emit_esm
from memsflow.fea import assemble, build_fea_model, modal_analysis
from memsflow.flows import netlist_to_layout, netlist_to_solid, solid_to_layout
from memsflow.geometry import polygon_set_equal
from memsflow.schematic import Kind
from memsflow.sim import build_sim_model, frequency_response

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="gyro_"))
out.mkdir(parents=True, exist_ok=True)

netlist = fixtures.load("gyro")
stack = fixtures.soi_stack()
si = stack.material("si")
print(f"netlist: {len(netlist.instances)} instances, {len(netlist.nodes)} nodes")
for kind in Kind:
    if netlist.count(kind):
        print(f"  {kind.value:12s} {netlist.count(kind)}")

# system -> device
solid = netlist_to_solid(netlist, stack)
(out / "gyro.esm").write_text(emit_esm(solid))
print(f"solid: {len(solid.prisms)} prisms -> {out / 'gyro.esm'}")

# device -> process, and the direct system -> process route for comparison
layout = solid_to_layout(solid, stack)
direct = netlist_to_layout(netlist, stack)
(out / "gyro.cif").write_text(emit_cif(layout))
for layer in sorted(set(layout.layers) | set(direct.layers)):
    same = polygon_set_equal(layout.shapes.get(layer, ()), direct.shapes.get(layer, ()))
    print(f"layer {layer}: {len(layout.shapes.get(layer, ()))} shapes, routes {'agree' if same else 'DIFFER'}")

# drive mode: lumped model against beam FEA
model = build_sim_model(netlist, si, stack, axes="x")
drive = next(c.name for c in netlist.instances if c.kind is Kind.LINEAR_COMB)
freqs = np.logspace(3, 5, 400)
H = frequency_response(model, drive, model.probes[0], freqs, bias=10.0)
f_lumped = freqs[np.nanargmax(np.abs(H))]
fea = assemble(build_fea_model(netlist, si, stack, refine=2, planar="in"))
f_fea = modal_analysis(fea, 1)[0][0]
print(f"drive resonance: lumped {f_lumped:.4g} Hz, FEA {f_fea:.4g} Hz")
