# the repository root goes on sys.path, so tests import `main` and `utils`
