import os

from nonlocalreg.exceptions import ConfigError

resourcedir = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'resources')

# --config names that refer to a bundled run configuration
BUNDLED_CONFIGS = {'example': 'example.cfg'}

def get_resource(name):
	path = os.path.join(resourcedir, name)
	if not os.path.exists(path):
		raise ConfigError(f"no bundled resource {name!r} in {resourcedir}")
	return path

def resolve_config(name):
	"""A bundled configuration by short name, otherwise the path itself."""
	if name in BUNDLED_CONFIGS and not os.path.exists(name):
		return get_resource(BUNDLED_CONFIGS[name])
	return name

def ensure_dir(path):
	try:
		os.makedirs(path, exist_ok=True)
	except OSError as exc:
		raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
	return path
