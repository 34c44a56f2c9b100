import numpy as np
import pytest

from detnet.arch import detnet59_spec, scale_width

# Lines recorded by the acceptance suite, echoed in the terminal summary so
# they survive output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Toy convergence run shared by the acceptance, CLI and trainer tests.  It
# goes through the ``train`` command with its default settings and is run
# once per session because it takes a few minutes on one core.
TOY_TARGET = 0.90


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    import io
    import time

    from detnet import cli
    from detnet.arch import build_network
    from detnet.trainer import load_weights, synth_dataset

    out_dir = tmp_path_factory.mktemp("toy")
    ckpt = str(out_dir / "toy.ckpt")
    buf = io.StringIO()
    t0 = time.perf_counter()
    code = cli.main(["train", "--out", ckpt, "--target-acc", str(TOY_TARGET)], out=buf)
    elapsed = time.perf_counter() - t0
    fields = dict(line.split(" ", 1) for line in buf.getvalue().splitlines())
    net = build_network(scale_width(detnet59_spec(), 16), n_classes=10, seed=0)
    load_weights(net, ckpt)
    with open(ckpt + ".loss.tsv", encoding="utf-8") as fh:
        losses = [float(line.split("\t")[1]) for line in fh.read().splitlines()[1:]]
    return {
        "exit_code": code,
        "net": net,
        "data": synth_dataset(0, 2000, 10, 64),
        "accuracy": float(fields["train_accuracy"]),
        "iterations": len(losses),
        "losses": losses,
        "seconds": elapsed,
        "checkpoint": ckpt,
    }
