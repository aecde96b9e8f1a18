import numpy as np
import pytest

from pmaxtest import Dataset


def random_dataset(rng, n, kd, kt, noise=1.0):
    xd = rng.standard_normal((n, kd))
    xt = rng.standard_normal((n, kt))
    y = xd.sum(axis=1) + noise * rng.standard_normal(n)
    return Dataset(y, xd, xt)


def dense_model_fit(ds, i):
    """Textbook OLS of y on [x_delta, x_theta_i]: (theta, delta, s) with s the se of sqrt(n) theta."""
    X = np.column_stack([ds.x_delta, ds.x_theta[:, i]])
    H = X.T @ X
    Hinv = np.linalg.inv(H)
    beta = Hinv @ (X.T @ ds.y)
    resid = ds.y - X @ beta
    v2 = resid @ resid / ds.n
    s = np.sqrt(ds.n * Hinv[-1, -1] * v2)
    return beta[-1], beta[:-1], s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance bookkeeping: one line per criterion, shown in the terminal summary
ACCEPTANCE: list[dict] = []
MANIFEST: dict = {}


def record(criterion, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {title} | {detail}"
    print(line)
    ACCEPTANCE.append({"criterion": criterion, "title": title, "pass": bool(ok), "detail": detail})
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(ACCEPTANCE, key=lambda r: (int(str(r["criterion"]).rstrip("ab")), str(r["criterion"]))):
        terminalreporter.write_line(
            f"[{'PASS' if r['pass'] else 'FAIL'}] criterion {r['criterion']}: {r['title']} | {r['detail']}"
        )
    import json
    from pathlib import Path

    out = Path(__file__).parent / "_artifacts"
    out.mkdir(exist_ok=True)
    payload = dict(MANIFEST, criteria=ACCEPTANCE)
    (out / "acceptance_manifest.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
