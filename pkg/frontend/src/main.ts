import { createConsole } from './app';

// Served statically; point it at the service with ?api=http://127.0.0.1:8123
// or leave it empty when the page shares an origin with the API.
const apiBase = new URLSearchParams(window.location.search).get('api') ?? '';
createConsole(document.getElementById('app') as HTMLElement, apiBase);
