#!/usr/bin/env python3
"""
Eco-Lane Planner - Setup Script
Installs and verifies the Python dependencies
"""

import os
import subprocess
import sys
from pathlib import Path

PACKAGES = [
    # (requirement, import name, required)
    ('numpy>=1.21.0', 'numpy', True),
    ('python-dotenv>=0.19.0', 'dotenv', True),
    ('Flask>=2.0.0', 'flask', True),
    ('Flask-CORS>=3.0.0', 'flask_cors', True),
    ('psutil>=5.8.0', 'psutil', True),
    ('pytest>=7.0.0', 'pytest', False),
]


def check_python_version():
    """Check if Python version is compatible"""
    print("🐍 Checking Python version...")

    if sys.version_info < (3, 8):
        print("❌ Python 3.8 or higher is required")
        print(f"   Current version: {sys.version}")
        return False

    print(f"✅ Python {sys.version.split()[0]} is compatible")
    return True


def install_all_at_once():
    """Try installing all dependencies from requirements.txt"""
    print("📦 Installing dependencies from requirements.txt...")

    try:
        subprocess.run([
            sys.executable, '-m', 'pip', 'install', '-r', 'requirements.txt'
        ], check=True, capture_output=True, timeout=600)
        print("✅ All dependencies installed successfully")
        return True
    except subprocess.CalledProcessError:
        print("❌ Batch installation failed, trying individual packages...")
        return False
    except subprocess.TimeoutExpired:
        print("⏰ Installation timeout, trying individual packages...")
        return False


def install_individually():
    """Install packages one by one; optional ones may fail"""
    ok = True
    for requirement, _, required in PACKAGES:
        print(f"   Installing {requirement}...")
        try:
            subprocess.run([
                sys.executable, '-m', 'pip', 'install', requirement
            ], check=True, capture_output=True)
        except subprocess.CalledProcessError:
            if required:
                print(f"❌ Failed to install {requirement}")
                ok = False
            else:
                print(f"⚠️  Warning: Could not install {requirement} (optional)")
    return ok


def verify_installation():
    """Verify that key packages can be imported"""
    print("🔍 Verifying installation...")

    failed = []
    for requirement, import_name, required in PACKAGES:
        try:
            __import__(import_name)
            print(f"   ✅ {requirement}")
        except ImportError:
            print(f"   {'❌' if required else '⚠️ '} {requirement}")
            if required:
                failed.append(requirement)

    if failed:
        print(f"\n❌ Failed to verify: {', '.join(failed)}")
        return False
    print("\n✅ All core dependencies verified successfully!")
    return True


def verify_scenarios():
    """Check that the bundled scenarios are present"""
    scenarios = sorted(Path('scenarios').glob('*.json'))
    if not scenarios:
        print("⚠️  No bundled scenarios found in ./scenarios")
        return False
    print(f"✅ {len(scenarios)} bundled scenarios: {', '.join(p.stem for p in scenarios)}")
    return True


def main():
    """Main setup function"""
    print("=" * 60)
    print("🚗 Eco-Lane Planner - Setup Script")
    print("   Installing Python dependencies...")
    print("=" * 60)

    if not check_python_version():
        sys.exit(1)

    os.chdir(Path(__file__).parent)

    if not install_all_at_once():
        print("\n🔧 Installing packages individually...")
        install_individually()

    if verify_installation() and verify_scenarios():
        print("\n🎉 Setup completed successfully!")
        print("\nNext steps:")
        print("1. Run the tests: pytest")
        print("2. Plan once: python main.py plan --scenario empty_road")
        print("3. Compare heuristics: python main.py bench --scenario urban_750m")
    else:
        print("\n⚠️  Setup completed with some issues.")
        print("   Please install missing packages manually:")
        print("   pip install <package-name>")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n👋 Setup cancelled by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n❌ Setup failed with error: {e}")
