#!/usr/bin/env python3
"""
posemod - Setup Script

Installs the backend dependencies, plus the test dependencies with --dev.
Run this once before using run.py to start the API.
"""

import subprocess
import sys
from pathlib import Path

ROOT_DIR = Path(__file__).parent.resolve()
BACKEND_DIR = ROOT_DIR / "backend"


def run_command(cmd, cwd=None, description=""):
    """Run a command and handle errors."""
    print(f"\n{'=' * 60}")
    print(f"  {description}")
    print(f"{'=' * 60}")
    print(f"  Running: {' '.join(cmd)}")
    print()

    result = subprocess.run(cmd, cwd=cwd)
    if result.returncode != 0:
        print(f"\n[ERROR] Command failed with exit code {result.returncode}")
        return False
    return True


def main():
    steps = [("requirements.txt", "Installing backend dependencies")]
    if "--dev" in sys.argv[1:]:
        steps.append(("requirements-test.txt", "Installing test dependencies"))

    success = all(
        run_command([sys.executable, "-m", "pip", "install", "-r", name], cwd=BACKEND_DIR, description=description)
        for name, description in steps
    )
    if not success:
        print("\n[ERROR] Setup completed with errors, check the output above.")
        sys.exit(1)
    print("\nSetup complete. Start the API with: python run.py")
    print("Or use the command line: cd backend && python cli.py --help")


if __name__ == "__main__":
    main()
