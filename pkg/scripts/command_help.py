"""プロジェクト内主要コマンドの簡易ヘルプを一覧表示する。

使い方:
    poetry run python scripts/command_help.py
"""

from __future__ import annotations


def main() -> None:
    sections = {
        "セットアップ": [
            "poetry install",
        ],
        "シミュレーション (simulate)": [
            "poetry run python dispatcher.py simulate --config fbm_d4 --seed 1",
            "poetry run python dispatcher.py simulate --config subfbm_d5 --workers 8 --formats csv json xlsx",
            "poetry run python dispatcher.py simulate --config fbm_d4 --raw --dump-paths",
            "poetry run python dispatcher.py simulate --config fbm_d4 --dump-config",
        ],
        "定数・極限則": [
            "poetry run python dispatcher.py constants --config fbm_d4",
            "poetry run python dispatcher.py constants --family bifbm --K 0.6666666666666666 --d 4",
            "poetry run python dispatcher.py limit-sample --config subfbm_d5 --count 10000",
            "poetry run python dispatcher.py remark18 --pairs 1,2 1,3",
        ],
        "数値チェック": [
            "poetry run python dispatcher.py check-assumptions --config subfbm_d5 --trials 2000",
            "poetry run python dispatcher.py check-assumptions --family fbm --d 4",
            "poetry run python dispatcher.py combinatorics-verify --m 6",
        ],
        "テスト": [
            "poetry run pytest",
            "poetry run pytest -m 'not slow'",
        ],
    }

    print("=== critical_gauss_functional コマンド早見表 ===")
    for title, commands in sections.items():
        print(f"\n[{title}]")
        for cmd in commands:
            print(f"  - {cmd}")


if __name__ == "__main__":
    main()
