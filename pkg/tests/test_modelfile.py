import numpy as np
import pytest

from nbmkl import modelfile, trainer
from nbmkl.data import synth_related_tasks
from nbmkl.kernels import build_bank
from nbmkl.subproblems import HyperParams
from oracles import SPECS


@pytest.fixture(scope="module", params=["MT-ONMKL", "AVMTMKL", "ITL"])
def model(request):
    data = synth_related_tasks(8, 2, 20, 3, kind="classification")
    bank = build_bank(data, SPECS, zscore=True)
    hp = HyperParams(C=2.0, eta=32.0, beta=2.0, max_outer=5)
    if request.param == "MT-ONMKL":
        return trainer.train_mtonmkl(bank, data, hp)
    return trainer.train_baseline(request.param, bank, data, hp)


def test_round_trip(model, tmp_path):
    path = tmp_path / "m.nbm"
    modelfile.save_model(model, path)
    back = modelfile.load_model(path)
    assert modelfile.dumps(back) == path.read_bytes()
    assert back.method == model.method and back.hp == model.hp
    np.testing.assert_array_equal(back.theta.vec, model.theta.vec)
    assert back.objective_trace() == model.objective_trace()
    X = np.random.default_rng(0).standard_normal((6, 3))
    for t in range(model.T):
        np.testing.assert_array_equal(back.decision(t, X), model.decision(t, X))
    assert (back.neighborhood is None) == (model.neighborhood is None)


def test_truncated_and_garbage(model):
    raw = modelfile.dumps(model)
    with pytest.raises(modelfile.ModelFileError):
        modelfile.loads(raw[:-3])
    with pytest.raises(modelfile.ModelFileError):
        modelfile.loads(raw + b"\0")
    with pytest.raises(modelfile.ModelFileError, match="magic|not a model"):
        modelfile.loads(b"XXXX" + raw[4:])
