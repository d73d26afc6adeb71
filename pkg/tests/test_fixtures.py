import pytest

from perchsim.fixtures import build_fixtures, data_dir

FILES = build_fixtures()


def test_fixture_set_is_complete():
    bundled = {str(p.relative_to(data_dir())) for p in data_dir().rglob("*") if p.is_file()}
    assert bundled == set(FILES)


@pytest.mark.parametrize("name", sorted(FILES))
def test_bundled_fixture_regenerates(name):
    # the bundled data must be exactly what the generator produces today
    assert (data_dir() / name).read_text() == FILES[name]
