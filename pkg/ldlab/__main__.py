from ldlab.main import main

main()
