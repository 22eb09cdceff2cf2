import csv
import math
import random

import pytest

import tabpc


@pytest.fixture()
def csv_path(tmp_path):
    rng = random.Random(0)
    path = tmp_path / "data.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "colour"])
        for _ in range(600):
            x = rng.gauss(0, 1)
            y = 2 * x + rng.gauss(0, 0.3)
            colour = "red" if x > 0.3 else rng.choice(["blue", "green"])
            w.writerow([f"{x:.6f}", f"{y:.6f}", colour])
    return path


def test_load_and_columns(csv_path):
    t = tabpc.load_csv(str(csv_path))
    assert t.n_rows == 600
    assert t.names == ["x", "y", "colour"]
    cols = t.to_columns()
    assert set(cols["colour"]) == {"red", "blue", "green"}
    assert all(isinstance(v, float) for v in cols["x"])


def test_fit_sample_metrics(csv_path, tmp_path):
    t = tabpc.load_csv(str(csv_path))
    train, val = t.rows(0, 500), t.rows(500, 600)
    model = tabpc.fit(train, val, kind="tabpc", units=4, max_epochs=5)
    assert model.kind == "tabpc"
    assert math.isfinite(model.val_bpd)
    fake = model.sample(400, seed=1)
    assert fake.n_rows == 400
    assert fake.names == t.names
    assert 0.0 <= tabpc.shape(train, fake) <= 1.0
    assert tabpc.wnmis(train, train) == 1.0
    assert 0.0 <= tabpc.c2st(train, fake, "logistic", 0) <= 1.0

    path = tmp_path / "m.json"
    model.save(str(path))
    again = tabpc.load_model(str(path))
    assert again.sample(50, seed=3).to_columns() == model.sample(50, seed=3).to_columns()


def test_errors_raise(csv_path):
    t = tabpc.load_csv(str(csv_path))
    with pytest.raises(tabpc.TabpcError):
        tabpc.fit(t, t, kind="nonsense")
    with pytest.raises(tabpc.TabpcError):
        tabpc.c2st(t, t, "svm", 0)


def test_cli_in_process():
    code, out, err = tabpc.run_cli(["--help"])
    assert code == 0
    assert "fit" in out
    code, out, err = tabpc.run_cli(["fit"])
    assert code == 2
    assert '"error"' in err
