#!/usr/bin/env python3
"""
posemod - API Launcher

Starts the FastAPI backend with auto-reload for local development.
Press Ctrl+C to stop.
"""

import subprocess
import sys
from pathlib import Path

BACKEND_PORT = 8000
ROOT_DIR = Path(__file__).parent.resolve()
BACKEND_DIR = ROOT_DIR / "backend"


def check_dependencies():
    """Check if required dependencies are installed."""
    try:
        import dotenv  # noqa: F401
        import fastapi  # noqa: F401
        import numpy  # noqa: F401
        import scipy  # noqa: F401
        import uvicorn  # noqa: F401
    except ImportError as e:
        print(f"\n[ERROR] Missing Python package: {e.name}. Run: python setup.py\n")
        return False
    return True


def main():
    if not check_dependencies():
        sys.exit(1)

    print(f"[Backend] Starting FastAPI server on http://localhost:{BACKEND_PORT}")
    print(f"[Backend] API docs at http://localhost:{BACKEND_PORT}/docs")
    try:
        subprocess.run(
            [
                sys.executable, "-m", "uvicorn",
                "main:app",
                "--host", "0.0.0.0",
                "--port", str(BACKEND_PORT),
                "--reload",
            ],
            cwd=BACKEND_DIR,
        )
    except KeyboardInterrupt:
        print("\n[Shutdown] Server stopped.")


if __name__ == "__main__":
    main()
