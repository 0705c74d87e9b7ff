import { App } from './app.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function loadFixtures(): Promise<Array<{ name: string; embedding: number[] }>> {
  try {
    const response = await fetch('./fixtures.json');
    if (!response.ok) return [];
    return (await response.json()) as Array<{ name: string; embedding: number[] }>;
  } catch {
    return [];
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get('api') ?? 'http://127.0.0.1:8008';
  new App(
    base,
    {
      canvas: el('overlay'),
      sidebar: el('sidebar'),
      history: el('history'),
      status: el('status'),
      banner: el('banner'),
      bundleInput: el('bundle-id'),
      embeddingInput: el('embedding'),
      fixtureSelect: el('fixtures'),
      startButton: el('start'),
      rejectButton: el('reject'),
      confirmButton: el('confirm'),
      refineInput: el('refine-embedding'),
      refineButton: el('refine'),
    },
    await loadFixtures(),
  );
}

void boot();
