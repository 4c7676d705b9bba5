"""Walk through the finite-difference gradient audit.

Every backward pass in the library is checked against central differences
computed in float64. This script prints the audit table for a clean run,
then deliberately corrupts one layer's gradient to show what a failure
looks like.
"""

from attnens.errors import NumericError
from attnens.gradcheck import TOLERANCE, audit_gradients


def print_rows(rows):
    for row in rows:
        verdict = "PASS" if row.max_rel_err < row.tolerance else "FAIL"
        print(f"  {row.name:<22} max_rel_err={row.max_rel_err:.3e}  {verdict}")


def main():
    print(f"Auditing analytic gradients (tolerance {TOLERANCE:g}):")
    rows = audit_gradients(seed=0)
    print_rows(rows)
    print(f"\nAll {len(rows)} layer kinds agree with central differences.")

    print("\nNow inflating the dense-layer error past tolerance to show detection:")
    try:
        print_rows(audit_gradients(seed=0, corrupt="dense"))
    except NumericError as e:
        print(f"  -> NumericError: {e}")
    else:
        rows = audit_gradients(seed=0, corrupt="dense")
        bad = [r.name for r in rows if r.max_rel_err >= r.tolerance]
        print(f"  -> flagged layers: {bad}")


if __name__ == "__main__":
    main()
