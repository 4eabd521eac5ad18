import pytest

from rumapprox.datasets import builtin_fishing, fishing_space, load_dataset, save_dataset
from rumapprox.errors import DataError


def test_builtin_fishing_constants():
    alts = builtin_fishing()
    assert [a.id for a in alts] == ["beach", "boat", "charter", "pier"]
    assert alts[0].chars == (103.422, 0.2410113)
    assert alts[1].chars == (55.256, 0.1712146)
    assert alts[2].chars == (84.379, 0.6293679)
    assert alts[3].chars == (103.422, 0.1622237)
    # beach and pier share the price coordinate; kept as-is, no perturbation
    assert alts[0].chars[0] == alts[3].chars[0]


def test_fishing_space_has_eleven_menus():
    space = fishing_space()
    assert len(space.menus) == 11
    assert space.is_rich


def test_round_trip(tmp_path):
    path = tmp_path / "alts.csv"
    save_dataset(builtin_fishing(), path)
    again = load_dataset(path)
    assert again == builtin_fishing()


def test_load_errors_carry_positions(tmp_path):
    path = tmp_path / "bad.csv"

    path.write_text("id,price\nx,1.0\nx,2.0\n")
    with pytest.raises(DataError, match="line 3.*duplicate"):
        load_dataset(path)

    path.write_text("id,price\nx,oops\n")
    with pytest.raises(DataError, match="line 2, column 2"):
        load_dataset(path)

    path.write_text("id,price\nx,1.0,9\n")
    with pytest.raises(DataError, match="line 2.*cells"):
        load_dataset(path)

    path.write_text("id,price\n")
    with pytest.raises(DataError, match="no alternatives"):
        load_dataset(path)

    path.write_text("price,id\nx,1.0\n")
    with pytest.raises(DataError, match="header"):
        load_dataset(path)
