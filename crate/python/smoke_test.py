"""Smoke test for the voxlabel extension module.

Build and install with `pip install ./crates/python` (needs maturin), then
run `python python/smoke_test.py`.
"""

import math
import os
import random
import tempfile

import voxlabel


def sphere(n=16, radius=5.0, noise=10.0, seed=0):
    rng = random.Random(seed)
    c = (n - 1) / 2
    data, mask = [], []
    for z in range(n):
        for y in range(n):
            for x in range(n):
                inside = (x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 <= radius**2
                data.append((100.0 if inside else 0.0) + rng.gauss(0.0, noise))
                mask.append(1 if inside else 0)
    dims = [n, n, n]
    return voxlabel.Volume(dims, data), voxlabel.LabelMask(dims, mask)


def main():
    vol, gt = sphere()
    assert vol.dims == [16, 16, 16]
    assert len(vol) == 16**3

    back = voxlabel.Volume.from_bytes(vol.to_bytes())
    assert back.data == vol.data
    assert voxlabel.dice(gt, gt) == 1.0

    # a block of foreground scribbles at the centre, background on one face
    scribbles = [0.0] * len(vol)
    for z in range(16):
        for y in range(16):
            for x in range(16):
                i = x + 16 * (y + 16 * z)
                if max(abs(x - 7.5), abs(y - 7.5), abs(z - 7.5)) < 2:
                    scribbles[i] = 2.0
                elif z == 0:
                    scribbles[i] = 3.0
    seg = voxlabel.segment_scribbles(vol, voxlabel.Volume(vol.dims, scribbles))
    score = voxlabel.dice(seg, gt)
    assert score > 0.9, score

    empty = voxlabel.LabelMask(gt.dims, [0] * len(vol))
    clicks = voxlabel.simulate_clicks(empty, gt, max_clicks=3)
    assert len(clicks["foreground"]) == 1 and clicks["background"] == []

    model = voxlabel.ReferenceModel.zeros()
    trained, report = model.train([(vol, gt)], {"epochs": 3, "learning_rate": 0.05, "mode": "deepedit"})
    assert len(report["epoch_loss"]) == 3
    probs = trained.predict(vol, clicks)
    assert len(probs) == len(vol) and all(0.0 <= p <= 1.0 for p in probs)

    assert voxlabel.epistemic_score(trained, vol, dropout_rate=0.0) == 0.0
    assert voxlabel.aleatoric_score(trained, vol) >= 0.0

    p = voxlabel.plan([vol], 1 << 30)
    assert all(math.log2(r).is_integer() and r >= 16 for r in p["roi_size"])

    with tempfile.TemporaryDirectory() as root:
        path = os.path.join(root, "m.lfm")
        trained.save(path)
        assert voxlabel.ReferenceModel.load(path).weights == trained.weights

        ds = voxlabel.Datastore(root)
        ds.add_image("a", vol.to_bytes())
        ds.add_image("b", vol.to_bytes())
        ds.save_label("a", gt.to_bytes(vol))
        assert ds.partition() == (["a"], ["b"])
        assert ds.next_sample("first", trained)["image_id"] == "b"
        try:
            ds.add_image("bad id!", vol.to_bytes())
        except voxlabel.VoxlabelError:
            pass
        else:
            raise AssertionError("bad id accepted")

    print("voxlabel smoke test passed")


if __name__ == "__main__":
    main()
