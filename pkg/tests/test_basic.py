import fsskit


def test_version():
    assert fsskit.__version__ == "0.1.0"


def test_public_api():
    for name in fsskit.__all__:
        assert hasattr(fsskit, name)
