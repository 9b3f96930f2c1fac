#!/usr/bin/env python3
"""
Quick Test for the ADC oracle and a single generator pass
Simple verification that the core pieces are wired together
"""
import os
import sys
from pathlib import Path

# Setup UTF-8 encoding for Windows
if os.name == 'nt':
    import codecs
    sys.stdout = codecs.getwriter("utf-8")(sys.stdout.detach())
    sys.stderr = codecs.getwriter("utf-8")(sys.stderr.detach())

# Add project to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

def quick_test():
    """Quick verification of core functionality"""
    print("Quick Test: phantom, ADC oracle and generator pass")
    print("=" * 55)

    # Test 1: Basic imports
    print("1. Testing imports...")
    try:
        import numpy as np
        import torch
        from cemri import (
            BValuePair, PhantomSpec, TrainConfig,
            adc_map, build_generator, generate_case, synthesize,
        )
        print("   [PASS] Imports successful")
    except Exception as e:
        print(f"   [FAIL] Import error: {e}")
        return False

    # Test 2: ADC recovered from a noise-free phantom
    print("2. Testing ADC recovery...")
    try:
        case = generate_case(PhantomSpec(image_size=32, noise_sigma=0.0), seed=0)
        inside = case.mask.astype(bool)
        adc = adc_map(case.dwi[0].astype(np.float64),
                      case.dwi[800].astype(np.float64),
                      BValuePair(0, 800)).values.numpy()
        error = np.abs(adc[inside] - case.adc_truth[inside]).max()

        if error < 1e-6:
            print(f"   [PASS] ADC recovered (max error {error:.2e})")
        else:
            print(f"   [FAIL] ADC error {error:.2e} exceeds 1e-6")
            return False
    except Exception as e:
        print(f"   [FAIL] ADC error: {e}")
        return False

    # Test 3: Generator synthesizes a CE image of the right shape
    print("3. Testing generator pass...")
    try:
        config = TrainConfig(channels=[8, 16, 32, 64], image_size=32)
        generator = build_generator(config.validate())
        case = generate_case(PhantomSpec(image_size=32), seed=1)
        ce = synthesize(generator, case.t1, [case.dwi[b] for b in case.b_values])

        if tuple(ce.shape) == (32, 32) and bool(torch.all((ce >= 0) & (ce <= 1))):
            print("   [PASS] Synthetic CE shaped (32, 32) in [0, 1]")
        else:
            print(f"   [FAIL] Unexpected output shape {tuple(ce.shape)}")
            return False
    except Exception as e:
        print(f"   [FAIL] Generator error: {e}")
        return False

    print("\n" + "=" * 55)
    print("Quick test PASSED! Core functionality verified.")
    print("=" * 55)
    return True

if __name__ == "__main__":
    success = quick_test()
    sys.exit(0 if success else 1)
