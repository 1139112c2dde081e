from hatkit.main import main

main()
