package main

import "fmt"

import (
	"net/http"
	log "github.com/sirupsen/logrus"
	_ "github.com/lib/pq"
)

func main() { fmt.Println("import \"nope\"") }
