"""Builds the extension by delegating to cargo; no Rust build system on the
Python side is required. Use `pip install -e . --no-build-isolation`.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

CRATE_DIR = Path(__file__).resolve().parent


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "fanocollapse-py"],
            cwd=CRATE_DIR,
            check=True,
        )
        target = CRATE_DIR.parent.parent / "target" / "release"
        for name in ("libfanocollapse_py.so", "libfanocollapse_py.dylib", "fanocollapse_py.dll"):
            built = target / name
            if built.exists():
                break
        else:
            raise FileNotFoundError(f"no cdylib found under {target}")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[Extension("fanocollapse_py", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
