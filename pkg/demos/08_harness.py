# Running experiments through the harness: same results for any worker
# count, and a manifest with content hashes of every output.
import json
import os
import tempfile

from minorlab.harness import ExperimentConfig, run_experiment

out = tempfile.mkdtemp()
base = {"schema_version": 1, "kind": "tails", "master_seed": 9,
        "ensemble": {"beta": 2}, "params": {"N": 128, "samples": 4000,
                                             "cell_size": 500}}
digests = []
for w in (1, 3):
    cfg = ExperimentConfig.from_dict(dict(base, workers=w,
                                          output_dir=os.path.join(out, f"w{w}")))
    digests.append(run_experiment(cfg)["digest"])
print("digests agree across worker counts:", digests[0] == digests[1])
with open(os.path.join(out, "w1", "manifest.json")) as fh:
    man = json.load(fh)
print("outputs:", sorted(man["outputs"]))
print("right-tail coefficient %.3f" % man["results"]["right_coefficient"])
print("the same run from the shell:  minorlab tails --seed 9 --out DIR")
