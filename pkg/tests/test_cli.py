"""
Tests for the command-line surface: exit codes, JSON output and run records
"""
import json

import pytest

from mkfa.src.handlers.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, router, run
from mkfa.src.utils.logger import RunLogger

TINY_PARAMS = 4_207_010


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv('MKFA_CONFIG', raising=False)
    monkeypatch.delenv('MKFA_THREADS', raising=False)


def _json_out(capsys) -> dict:
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return json.loads(lines[-1])


def _gen(out, seed=5, n=4):
    return run([
        'gen-data', '--out', str(out), '--n-real', str(n), '--n-fake', str(n),
        '--image-size', '32', '--seed', str(seed), '--split-fraction', '0.5',
    ])


class TestParams:

    def test_json_total(self, capsys):
        assert run(['params', '--preset', 'tiny', '--json']) == EXIT_OK
        result = _json_out(capsys)
        assert result['total'] == TINY_PARAMS
        assert sum(result['breakdown'].values()) == TINY_PARAMS

    def test_text_summary(self, capsys):
        assert run(['params', '--preset', 'tiny']) == EXIT_OK
        assert "tiny: 4,207,010 parameters" in capsys.readouterr().out

    def test_variant_flags(self, capsys):
        run(['params', '--preset', 'micro', '--json'])
        full = _json_out(capsys)['total']
        run(['params', '--preset', 'micro', '--mka-variant', 'gating_only', '--json'])
        assert _json_out(capsys)['total'] < full

    def test_preset_from_config_file(self, tmp_path, capsys):
        path = tmp_path / "config.yaml"
        path.write_text("train:\n  preset: small\n")
        assert run(['params', '--config', str(path), '--json']) == EXIT_OK
        assert _json_out(capsys)['preset'] == 'small'


class TestUsage:

    @pytest.mark.parametrize("argv", [
        [], ['fit'], ['params', '--preset', 'huge'], ['params', '--bogus'], ['gen-data'],
        ['train', '--data', 'x', '--out', 'y', '--init-ckpt', 'a', '--resume', 'b'],
    ])
    def test_usage_errors(self, argv):
        assert run(argv) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert run(['params', '--config', str(tmp_path / "nope.yaml")]) == EXIT_USAGE

    @pytest.mark.parametrize("command", sorted(router.routes))
    def test_help(self, command, capsys):
        assert run([command, '--help']) == EXIT_OK
        assert '--threads' in capsys.readouterr().out

    @pytest.mark.parametrize("exc", [KeyError('stage9'), RuntimeError("boom"), ZeroDivisionError()])
    def test_unexpected_error_is_runtime_failure(self, monkeypatch, tmp_path, exc):
        def fail(args, cfg):
            raise exc

        monkeypatch.setattr(router.routes['params'], 'handler', fail)
        assert run(['params', '--log-dir', str(tmp_path)]) == EXIT_RUNTIME
        (record,) = RunLogger(str(tmp_path)).get_runs('params')
        assert record['error'].startswith(type(exc).__name__)

    def test_missing_checkpoint_is_runtime_failure(self, tmp_path):
        _gen(tmp_path / "corpus")
        argv = ['eval', '--ckpt', str(tmp_path / "none.mkfa"), '--data', str(tmp_path / "corpus")]
        assert run(argv) == EXIT_RUNTIME


class TestGradcheck:

    def test_single_op_passes(self, capsys):
        assert run(['gradcheck', '--f64', '--ops', 'conv2d', '--shapes', '1']) == EXIT_OK
        result = _json_out(capsys)
        assert result['cases'] == 1
        assert result['failed'] == []

    def test_unknown_op(self):
        assert run(['gradcheck', '--ops', 'fft']) == EXIT_USAGE


class TestGenData:

    def test_same_seed_same_tree(self, tmp_path, capsys):
        assert _gen(tmp_path / "a") == EXIT_OK
        assert _json_out(capsys)['counts'] == {'real': 4, 'fake': 4, 'train': 4, 'test': 4}
        assert _gen(tmp_path / "b") == EXIT_OK
        tree_a = {p.name: p.read_bytes() for p in sorted((tmp_path / "a").iterdir())}
        tree_b = {p.name: p.read_bytes() for p in sorted((tmp_path / "b").iterdir())}
        assert tree_a == tree_b

    def test_different_seed_differs(self, tmp_path):
        _gen(tmp_path / "a", seed=1)
        _gen(tmp_path / "b", seed=2)
        images_a = sorted(p.read_bytes() for p in (tmp_path / "a").glob("*.ppm"))
        images_b = sorted(p.read_bytes() for p in (tmp_path / "b").glob("*.ppm"))
        assert images_a != images_b


class TestRunRecord:

    def test_success_record(self, tmp_path):
        assert run(['params', '--preset', 'micro', '--log-dir', str(tmp_path)]) == EXIT_OK
        records = RunLogger(str(tmp_path))
        (date,) = records.get_all_dates()
        assert records.get_commands_for_date(date) == ['params']
        (record,) = records.get_runs('params', date)
        assert record['command'] == 'params'
        assert record['error'] is None
        assert record['config']['args']['preset'] == 'micro'
        assert record['result']['total'] > 0

    def test_failure_record(self, tmp_path):
        _gen(tmp_path / "corpus")
        argv = ['eval', '--ckpt', str(tmp_path / "none.mkfa"), '--data', str(tmp_path / "corpus"),
                '--log-dir', str(tmp_path / "logs")]
        assert run(argv) == EXIT_RUNTIME
        (record,) = RunLogger(str(tmp_path / "logs")).get_runs('eval')
        assert record['error'].startswith('CheckpointError')


class TestPipeline:

    @pytest.fixture
    def trained(self, tmp_path):
        corpus = tmp_path / "corpus"
        _gen(corpus)
        argv = ['train', '--data', str(corpus), '--out', str(tmp_path / "run"), '--preset', 'micro',
                '--epochs', '1', '--batch-size', '4', '--no-augment', '--seed', '3']
        assert run(argv) == EXIT_OK
        return corpus, tmp_path / "run" / "checkpoint.mkfa"

    def test_train_then_eval(self, trained, tmp_path, capsys):
        corpus, ckpt = trained
        assert ckpt.exists()
        capsys.readouterr()
        out = tmp_path / "eval.json"
        assert run(['eval', '--ckpt', str(ckpt), '--data', str(corpus), '--out', str(out)]) == EXIT_OK
        result = _json_out(capsys)
        assert result['count'] == 4
        assert 0.0 <= result['auc'] <= 1.0
        assert json.loads(out.read_text())['count'] == 4

    def test_spectrum_and_gradcam(self, trained, tmp_path, capsys):
        corpus, ckpt = trained
        spectrum = tmp_path / "spectrum.csv"
        assert run(['spectrum', '--data', str(corpus), '--out', str(spectrum), '--bins', '8']) == EXIT_OK
        assert spectrum.read_text().splitlines()[0].startswith("bin,freq,real_mean,fake_mean")
        image = sorted(corpus.glob("*.ppm"))[0]
        capsys.readouterr()
        assert run(['gradcam', '--ckpt', str(ckpt), '--image', str(image), '--out', str(tmp_path / "cam")]) == EXIT_OK
        result = _json_out(capsys)
        assert result['tap'] == 'stage3.block4'
        assert (tmp_path / "cam").is_dir()
