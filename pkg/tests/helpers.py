import numpy as np


def interior(n, frac=0.8):
    cut = int(round(n * (1 - frac) / 2))
    return slice(cut, n - cut)


def corr(a, b):
    return float(np.corrcoef(a, b)[0, 1])


def random_smooth_signal(seed):
    """Sum of 2-4 sinusoids plus light noise, length 1000-3000."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1000, 3001))
    k = np.arange(n, dtype=np.float64)
    x = np.zeros(n)
    for _ in range(int(rng.integers(2, 5))):
        period = rng.uniform(6, n / 3)
        x += rng.uniform(0.2, 3.0) * np.sin(2 * np.pi * k / period + rng.uniform(0, 2 * np.pi))
    return x + 0.05 * rng.standard_normal(n)


def gradient_check(seed, step=1e-5, floor=1e-6):
    """Largest relative error between BPTT and central differences.

    Small model: hidden=4, L=3, K=2. The relative error of each component is
    |a - n| / max(|a|, |n|, floor).
    """
    from sttf.neuralnet import ModelParams, model_backward, model_forward

    params = ModelParams.init(2, hidden=4, score_dim=4, dense_units=4, seed=seed)
    rng = np.random.default_rng(1000 + seed)
    window = rng.standard_normal((3, 2))
    label = float(rng.standard_normal())
    grads = dict(model_backward(params, window, label).tensors())

    def loss():
        return (model_forward(params, window)[0] - label) ** 2

    worst, count = 0.0, 0
    for name, arr in params.tensors():
        flat = arr.reshape(-1)
        g = grads[name].reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            up = loss()
            flat[j] = keep - step
            down = loss()
            flat[j] = keep
            numeric = (up - down) / (2 * step)
            rel = abs(g[j] - numeric) / max(abs(g[j]), abs(numeric), floor)
            worst = max(worst, rel)
            count += 1
    return worst, count


# one line per acceptance criterion, printed again in the terminal summary
ACCEPTANCE_LINES = []


def record(capsys, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print(f"\n[acceptance] {line}")
    return ok
