from sparsefbox.cli import main

main()
