"""Tests for the qsd command line."""

import orjson
import pytest

from qsdiff.cli import run
from qsdiff.status import EXIT_OK, EXIT_PRECONDITION, EXIT_UNDETERMINED

FAST_SIMULATION = [
    '--paths', '2000', '--t', '1.0', '--dt', '0.01', '--bins', '8',
    '--x-hi', '4.0', '--block-size', '500', '--seed', '3',
]


class TestClassify:
    """Test the classify command."""

    def test_converges(self, write_model, capsys):
        """Test a converging model on standard output."""
        code = run(['classify', '--model', str(write_model('-1'))])
        document = orjson.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        assert document['outcome'] == 'converges'
        assert document['mortality_rate'] == pytest.approx(0.5, rel=1e-6)

    def test_undetermined_exit_code(self, write_model, capsys):
        """Test that an undetermined verdict exits with 2."""
        code = run(['classify', '--model', str(write_model('0', kappa='1', alpha=0))])
        assert code == EXIT_UNDETERMINED
        assert orjson.loads(capsys.readouterr().out)['outcome'] == 'undetermined'

    def test_output_file(self, write_model, tmp_path):
        """Test writing the verdict to a file."""
        out = tmp_path / 'verdict.json'
        code = run(['classify', '--model', str(write_model('1')), '--out', str(out)])
        assert code == EXIT_OK
        assert orjson.loads(out.read_bytes())['outcome'] == 'escapes'

    def test_parse_error(self, write_model, capsys):
        """Test that a malformed expression reports a structured error."""
        code = run(['classify', '--model', str(write_model('x + * 2'))])
        report = orjson.loads(capsys.readouterr().err)
        assert code == EXIT_PRECONDITION
        assert report['error']['code'] == 'MODEL_SPEC_ERROR'
        assert 'offset 4' in report['error']['details']['errors'][0]['msg']

    def test_missing_model(self, tmp_path, capsys):
        """Test a missing model file."""
        code = run(['classify', '--model', str(tmp_path / 'absent.json')])
        assert code == EXIT_PRECONDITION
        assert 'not found' in orjson.loads(capsys.readouterr().err)['error']['message']

    def test_singular_zero(self, write_model, capsys):
        """Test a precondition failure."""
        code = run(['classify', '--model', str(write_model('1 / x'))])
        report = orjson.loads(capsys.readouterr().err)
        assert code == EXIT_PRECONDITION
        assert report['error']['code'] == 'PRECONDITION_VIOLATED'

    def test_simple_error_format(self, write_model, capsys):
        """Test the code/message error report."""
        code = run(['--error-format', 'simple', 'classify', '--model', str(write_model('1 / x'))])
        report = orjson.loads(capsys.readouterr().err)
        assert code == EXIT_PRECONDITION
        assert set(report) == {'code', 'message'}

    def test_usage_error(self, capsys):
        """Test that a missing option is a usage error."""
        assert run(['classify']) == EXIT_PRECONDITION
        assert '--model' in capsys.readouterr().err


class TestEigen:
    """Test the eigen command."""

    def test_ground_state(self, write_model, tmp_path):
        """Test the reflected Airy ground state with its CSV."""
        out = tmp_path / 'eigen.json'
        model = write_model('0', kappa='x', alpha=0)
        assert run(['eigen', '--model', str(model), '--out', str(out)]) == EXIT_OK
        document = orjson.loads(out.read_bytes())
        assert document['index'] == 0
        assert document['lambda'] == pytest.approx(0.80861, abs=1e-3)
        assert document['phi_csv'] == str(tmp_path / 'eigen.csv')
        assert (tmp_path / 'eigen.csv').read_text().startswith('x,phi\n')

    def test_higher_index(self, write_model, capsys):
        """Test an eigenvalue above the ground state."""
        model = write_model('0', kappa='x', alpha=0)
        assert run(['eigen', '--model', str(model), '--index', '1']) == EXIT_OK
        document = orjson.loads(capsys.readouterr().out)
        assert document['index'] == 1
        assert document['lambda'] == pytest.approx(2.5781, abs=1e-3)


class TestQsd:
    """Test the qsd command."""

    def test_density_and_plot(self, write_model, tmp_path):
        """Test the density CSV and its gnuplot script."""
        out = tmp_path / 'qsd.csv'
        code = run(['qsd', '--model', str(write_model('-1')), '--out', str(out), '--plot'])
        assert code == EXIT_OK
        assert out.read_text().startswith('x,density\n')
        assert "'qsd.csv'" in (tmp_path / 'qsd.gp').read_text()

    def test_not_normalizable(self, write_model, tmp_path, capsys):
        """Test a model without a quasistationary density."""
        code = run(['qsd', '--model', str(write_model('1')), '--out', str(tmp_path / 'q.csv')])
        assert code == EXIT_PRECONDITION
        assert orjson.loads(capsys.readouterr().err)['error']['code'] == 'NOT_NORMALIZABLE'


class TestSimulate:
    """Test the simulate command."""

    def test_reproducible(self, write_model, tmp_path):
        """Test that the same seed gives identical files."""
        model = str(write_model('-1'))
        first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
        assert run(['simulate', '--model', model, *FAST_SIMULATION, '--out', str(first)]) == 0
        assert run(
            ['simulate', '--model', model, *FAST_SIMULATION, '--workers', '2', '--out', str(second)]
        ) == 0
        assert first.read_bytes() == second.read_bytes()
        document = orjson.loads((tmp_path / 'a.json').read_bytes())
        assert document['paths'] == 2000
        assert document['seed'] == 3

    def test_invalid_record_times(self, write_model, tmp_path):
        """Test that malformed record times are a usage error."""
        code = run(
            ['simulate', '--model', str(write_model('-1')), '--record-times', '1,x',
             '--out', str(tmp_path / 's.csv')]
        )
        assert code == EXIT_PRECONDITION


class TestVerify:
    """Test the verify command."""

    def test_undetermined(self, write_model, capsys):
        """Test that an undetermined verdict skips the simulation."""
        code = run(['verify', '--model', str(write_model('0', kappa='1', alpha=0))])
        document = orjson.loads(capsys.readouterr().out)
        assert code == EXIT_UNDETERMINED
        assert document['checks'] == []
        assert not document['agreement']

    def test_checks_reported(self, write_model, capsys):
        """Test that a determined verdict lists its checks."""
        code = run(['verify', '--model', str(write_model('-1')), *FAST_SIMULATION])
        document = orjson.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        names = {check['name'] for check in document['checks']}
        assert {'mortality_rate', 'tv_trend'} <= names


class TestHTransform:
    """Test the htransform command."""

    def test_transient_model(self, write_model, tmp_path):
        """Test that drift +1 becomes drift -1."""
        out = tmp_path / 'h.json'
        assert run(['htransform', '--model', str(write_model('1')), '--out', str(out)]) == 0
        document = orjson.loads(out.read_bytes())
        assert float(document['drift']) == pytest.approx(-1.0, abs=1e-8)
        assert document['alpha'] == 'inf'

    def test_recurrent_model(self, write_model, tmp_path, capsys):
        """Test strict and lenient handling of a recurrent model."""
        out = tmp_path / 'h.json'
        model = str(write_model('-1'))
        assert run(['htransform', '--model', model, '--out', str(out)]) == EXIT_PRECONDITION
        assert not out.exists()
        capsys.readouterr()
        assert run(['htransform', '--model', model, '--out', str(out), '--lenient']) == 0
        assert 'unchanged' in capsys.readouterr().err
        assert orjson.loads(out.read_bytes())['drift'] == '-1'


class TestSchema:
    """Test the schema command."""

    @pytest.mark.parametrize('name', ['model', 'verdict', 'eigen', 'survivor-stats', 'verify'])
    def test_schema(self, name, capsys):
        """Test that every schema prints as JSON."""
        assert run(['schema', name]) == EXIT_OK
        assert orjson.loads(capsys.readouterr().out)['type'] == 'object'

    def test_unknown_schema(self):
        """Test an unknown schema name."""
        assert run(['schema', 'nope']) == EXIT_PRECONDITION
